#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xctsr/defects.hpp"
#include "xctsr/volume.hpp"

namespace xctsr {

enum class PartShape { Block, Cylinder };

struct PoreSpec {
  std::array<int, 3> center{0, 0, 0};       // voxel index (z, y, x)
  std::array<double, 3> radii{0.5, 0.5, 0.5};  // semi-axes in voxels
};

struct PhantomSpec {
  std::array<int, 3> dims{64, 256, 256};
  double voxel_size_um = 17.28;
  PartShape part_shape = PartShape::Cylinder;
  double material_intensity = 0.8;
  double background_intensity = 0.1;
  std::vector<PoreSpec> defects;
  std::uint64_t seed = 0;

  void validate() const;
};

// Signed distance (voxels, positive inside) from a voxel centre to the part surface.
double part_depth(const PhantomSpec& spec, int z, int y, int x);

// Voxels at least `margin` voxels inside the part surface (pores included).
std::vector<std::uint8_t> part_interior_mask(const PhantomSpec& spec, double margin);

// Part at material intensity with a one-voxel linear ramp at its surface;
// exterior and pores at background intensity. Pores are ellipsoids rasterised
// with hard edges and must be separated from each other and the surface.
std::pair<Volume, std::vector<DefectRecord>> generate_phantom(const PhantomSpec& spec);

enum class DegradeMode { Isotropic, InPlane };

struct DegradationSpec {
  double blur_sigma_vox = 1.0;
  int bin_factor = 4;
  double noise_sigma = 0.02;
  double bias_amplitude = 0.05;
  DegradeMode mode = DegradeMode::Isotropic;
  std::uint64_t seed = 0;

  void validate() const;
};

// Gaussian blur -> box-average binning -> additive Gaussian noise ->
// multiplicative radial bias field growing toward the part boundary.
Volume degrade(const Volume& hr, const DegradationSpec& deg);

// Template for random phantoms: pore sizes drawn log-uniformly between the
// nominal diameter bounds, the first two pinned to the bounds.
struct PhantomTemplate {
  std::array<int, 3> dims{64, 256, 256};
  double voxel_size_um = 17.28;
  PartShape part_shape = PartShape::Cylinder;
  double material_intensity = 0.8;
  double background_intensity = 0.1;
  int n_defects = 120;
  double min_diameter_vox = 1.0;
  double max_diameter_vox = 16.0;
  double aspect_jitter = 0.2;
};

PhantomSpec random_phantom(const PhantomTemplate& tpl, std::uint64_t seed);

struct ManifestEntry {
  int id = 0;
  std::string split;  // "train" or "test"
  std::filesystem::path hr, lr, defects;
  std::uint64_t phantom_seed = 0;
  std::uint64_t degrade_seed = 0;
  PhantomSpec phantom;  // geometry only; pores live in the defect file
};

struct Manifest {
  std::filesystem::path root;
  std::uint64_t seed = 0;
  PhantomTemplate phantom_template;
  DegradationSpec degradation;
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry*> split(const std::string& name) const;
};

// Writes HR/LR volume pairs (normalised with the HR bounds), defect files and
// manifest.json under out_dir. Same seed => byte-identical files.
Manifest make_dataset(int n_train_parts, int n_test_parts, const PhantomTemplate& tpl,
                      const DegradationSpec& degradation, const std::filesystem::path& out_dir,
                      std::uint64_t seed, bool overwrite = false);

Manifest load_manifest(const std::filesystem::path& path);
// Entry paths are written as given (relative to the manifest directory).
void save_manifest(const Manifest& m, const std::filesystem::path& path);
std::filesystem::path manifest_path(const std::filesystem::path& dir);

// Deterministic sub-seed from a master seed, a purpose tag and an index.
std::uint64_t derive_seed(std::uint64_t master, const std::string& tag, std::uint64_t index = 0);

// 64-bit FNV-1a over a file's bytes.
std::uint64_t file_checksum(const std::filesystem::path& path);

nlohmann::json to_json(const PhantomSpec& s);
nlohmann::json to_json(const PhantomTemplate& t);
nlohmann::json to_json(const DegradationSpec& d);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);
PhantomTemplate phantom_template_from_json(const nlohmann::json& j);
DegradationSpec degradation_from_json(const nlohmann::json& j);
std::string to_string(PartShape s);
PartShape parse_part_shape(const std::string& s);

}  // namespace xctsr
