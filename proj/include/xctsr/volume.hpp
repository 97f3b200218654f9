#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace xctsr {

// Dense (z, y, x) float grid.
struct Grid {
  std::array<int, 3> dims{0, 0, 0};
  std::vector<float> data;

  Grid() = default;
  Grid(std::array<int, 3> d, float fill = 0.0f);

  int nz() const { return dims[0]; }
  int ny() const { return dims[1]; }
  int nx() const { return dims[2]; }
  std::size_t size() const { return data.size(); }
  std::size_t index(int z, int y, int x) const {
    return (std::size_t(z) * dims[1] + y) * dims[2] + x;
  }
  float& at(int z, int y, int x) { return data[index(z, y, x)]; }
  float at(int z, int y, int x) const { return data[index(z, y, x)]; }
  const float* slice(int z) const { return data.data() + std::size_t(z) * dims[1] * dims[2]; }
  float* slice(int z) { return data.data() + std::size_t(z) * dims[1] * dims[2]; }

  Grid crop(std::array<int, 3> origin, std::array<int, 3> extent) const;
  bool operator==(const Grid&) const = default;
};

struct VoxelSize {
  double z = 1.0;
  double y = 1.0;
  double x = 1.0;
  double volume() const { return z * y * x; }
  bool operator==(const VoxelSize&) const = default;
};

// A reconstruction volume: normalised intensities on a physical voxel grid,
// plus free-form provenance.
struct Volume {
  Grid grid;
  VoxelSize voxel_size;  // micrometres
  std::map<std::string, std::string> meta;

  Volume() = default;
  Volume(Grid g, VoxelSize vs, std::map<std::string, std::string> m = {});

  // Throws ValidationError naming the first offending voxel or field.
  void validate() const;
  const std::array<int, 3>& dims() const { return grid.dims; }
};

enum class Interp { Nearest, Linear, Cubic };
Interp parse_interp(const std::string& s);

// Maps lo -> 0 and hi -> 1, clamps to [0, 1], records the bounds in meta.
Volume normalize_volume(const Volume& vol, double lo, double hi);

// Resamples along z by `factor` (output count = round(factor * nz)), using
// half-voxel-centred sampling with edge clamping. Voxel z-size is divided by factor.
Volume resample_z(const Volume& vol, double factor, Interp method);

// Same, for one in-plane axis or all three; axis 0 = z, 1 = y, 2 = x.
Volume resample_axis(const Volume& vol, int axis, double factor, Interp method);
Volume resample_all(const Volume& vol, double factor, Interp method);

// File format: <stem>.raw (little-endian float32, z-major) + <stem>.json header.
void save_volume(const Volume& vol, const std::filesystem::path& stem);
Volume load_volume(const std::filesystem::path& path);
std::filesystem::path raw_path(const std::filesystem::path& stem);
std::filesystem::path header_path(const std::filesystem::path& stem);

}  // namespace xctsr
