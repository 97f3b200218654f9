#include "xctsr/defects.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <nlohmann/json.hpp>

#include "xctsr/error.hpp"

namespace xctsr {

using nlohmann::json;

double equivalent_sphere_diameter(double volume) {
  return std::cbrt(6.0 * volume / std::numbers::pi);
}

DefectRecord make_record(int id, std::vector<std::int64_t> voxels, const std::array<int, 3>& dims,
                         double voxel_volume_um3) {
  require(!voxels.empty(), "a defect needs at least one voxel");
  std::sort(voxels.begin(), voxels.end());
  DefectRecord r;
  r.id = id;
  r.voxel_count = static_cast<std::int64_t>(voxels.size());
  r.effective_diameter_um = equivalent_sphere_diameter(double(r.voxel_count) * voxel_volume_um3);
  const std::int64_t plane = std::int64_t(dims[1]) * dims[2];
  double sz = 0, sy = 0, sx = 0;
  for (std::int64_t v : voxels) {
    sz += double(v / plane);
    sy += double((v % plane) / dims[2]);
    sx += double(v % dims[2]);
  }
  const double n = double(voxels.size());
  r.center_vox = {static_cast<int>(std::lround(sz / n)), static_cast<int>(std::lround(sy / n)),
                  static_cast<int>(std::lround(sx / n))};
  r.voxel_set = std::move(voxels);
  return r;
}

void save_defects(const std::vector<DefectRecord>& records, const std::array<int, 3>& dims,
                  const std::filesystem::path& path) {
  json j;
  j["format"] = "xctsr-defects";
  j["version"] = 1;
  j["dims"] = dims;
  json arr = json::array();
  for (const auto& r : records) {
    arr.push_back({{"id", r.id},
                   {"center_vox", r.center_vox},
                   {"voxel_count", r.voxel_count},
                   {"effective_diameter_um", r.effective_diameter_um},
                   {"voxel_set", r.voxel_set}});
  }
  j["records"] = std::move(arr);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os << j.dump() << "\n";
}

std::vector<DefectRecord> load_defects(const std::filesystem::path& path, std::array<int, 3>* dims) {
  std::ifstream is(path);
  if (!is) throw RuntimeFailure("cannot open defect file " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed defect file " + path.string() + ": " + e.what());
  }
  require(j.value("format", "") == "xctsr-defects", path.string() + " is not a defect file");
  if (dims) *dims = j.at("dims").get<std::array<int, 3>>();
  std::vector<DefectRecord> out;
  for (const auto& e : j.at("records")) {
    DefectRecord r;
    r.id = e.at("id").get<int>();
    r.center_vox = e.at("center_vox").get<std::array<int, 3>>();
    r.voxel_count = e.at("voxel_count").get<std::int64_t>();
    r.effective_diameter_um = e.at("effective_diameter_um").get<double>();
    r.voxel_set = e.at("voxel_set").get<std::vector<std::int64_t>>();
    require(r.voxel_count == std::int64_t(r.voxel_set.size()), "defect voxel_count mismatch in " + path.string());
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace xctsr
