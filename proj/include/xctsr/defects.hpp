#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace xctsr {

// Diameter of the sphere with the same volume: (6 V / pi)^(1/3).
double equivalent_sphere_diameter(double volume);

struct DefectRecord {
  int id = 0;
  std::array<int, 3> center_vox{0, 0, 0};
  std::int64_t voxel_count = 0;
  double effective_diameter_um = 0.0;
  std::vector<std::int64_t> voxel_set;  // sorted linear (z, y, x) indices
};

DefectRecord make_record(int id, std::vector<std::int64_t> voxels, const std::array<int, 3>& dims,
                         double voxel_volume_um3);

void save_defects(const std::vector<DefectRecord>& records, const std::array<int, 3>& dims,
                  const std::filesystem::path& path);
std::vector<DefectRecord> load_defects(const std::filesystem::path& path,
                                       std::array<int, 3>* dims = nullptr);

}  // namespace xctsr
