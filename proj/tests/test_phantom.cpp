#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "xctsr/error.hpp"
#include "xctsr/phantom.hpp"

using namespace xctsr;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xctsr_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

PhantomSpec small_spec() {
  PhantomSpec s;
  s.dims = {16, 32, 32};
  s.part_shape = PartShape::Block;
  return s;
}

}  // namespace

TEST_CASE("degradation without blur, noise or bias is a box average") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  Grid g({8, 8, 12});
  for (float& v : g.data) v = u(rng);
  const Volume hr(g, VoxelSize{2, 2, 2});
  DegradationSpec d;
  d.blur_sigma_vox = 0;
  d.noise_sigma = 0;
  d.bias_amplitude = 0;
  d.bin_factor = 4;
  const Volume lr = degrade(hr, d);
  REQUIRE(lr.dims() == std::array<int, 3>{2, 2, 3});
  CHECK(lr.voxel_size == VoxelSize{8, 8, 8});
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) {
        double acc = 0;
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c) acc += g.at(z * 4 + a, y * 4 + b, x * 4 + c);
        CHECK(lr.grid.at(z, y, x) == doctest::Approx(acc / 64).epsilon(1e-6));
      }
  d.mode = DegradeMode::InPlane;
  const Volume ip = degrade(hr, d);
  CHECK(ip.dims() == std::array<int, 3>{8, 2, 3});
  CHECK(ip.grid.at(5, 1, 2) == doctest::Approx([&] {
          double acc = 0;
          for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c) acc += g.at(5, 4 + b, 8 + c);
          return acc / 16;
        }()).epsilon(1e-6));
}

TEST_CASE("degradation noise statistics and determinism") {
  const Volume hr(Grid({32, 64, 64}, 0.5f), VoxelSize{1, 1, 1});
  DegradationSpec d;
  d.bias_amplitude = 0;
  d.noise_sigma = 0.1;
  d.seed = 5;
  const Volume a = degrade(hr, d), b = degrade(hr, d);
  CHECK(a.grid == b.grid);
  double m = 0, v = 0;
  for (float x : a.grid.data) m += x;
  m /= double(a.grid.size());
  for (float x : a.grid.data) v += (x - m) * (x - m);
  v /= double(a.grid.size());
  CHECK(m == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::sqrt(v) == doctest::Approx(0.1).epsilon(0.05));
  d.seed = 6;
  CHECK(!(degrade(hr, d).grid == a.grid));
  DegradationSpec bad;
  bad.bin_factor = 3;
  CHECK_THROWS_AS(degrade(hr, bad), ValidationError);
}

TEST_CASE("phantom pores are hard-edged ellipsoids at background intensity") {
  PhantomSpec s = small_spec();
  s.defects.push_back({{8, 16, 16}, {1.0, 1.0, 1.0}});
  s.defects.push_back({{8, 10, 22}, {0.5, 0.5, 0.5}});
  const auto [vol, recs] = generate_phantom(s);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].voxel_count == 7);  // centre plus 6 face neighbours
  CHECK(recs[1].voxel_count == 1);
  for (auto v : recs[0].voxel_set) CHECK(vol.grid.data[std::size_t(v)] == doctest::Approx(s.background_intensity));
  CHECK(vol.grid.at(8, 16, 18) == doctest::Approx(s.material_intensity));
  CHECK(vol.grid.at(0, 0, 0) == doctest::Approx(s.background_intensity));
  CHECK(recs[1].effective_diameter_um == doctest::Approx(21.44).epsilon(1e-3));
}

TEST_CASE("touching or exposed pores are rejected") {
  PhantomSpec s = small_spec();
  s.defects.push_back({{8, 16, 16}, {1.0, 1.0, 1.0}});
  s.defects.push_back({{8, 18, 17}, {0.5, 0.5, 0.5}});  // diagonal neighbour of (8, 17, 16)
  CHECK_THROWS_AS(generate_phantom(s), ValidationError);
  PhantomSpec e = small_spec();
  e.defects.push_back({{2, 16, 16}, {1.0, 1.0, 1.0}});
  CHECK_THROWS_AS(generate_phantom(e), ValidationError);
}

TEST_CASE("random phantoms are deterministic, separated and span the diameter range") {
  PhantomTemplate t;
  t.dims = {32, 64, 64};
  t.n_defects = 30;
  t.min_diameter_vox = 1;
  t.max_diameter_vox = 6;
  const PhantomSpec a = random_phantom(t, 3), b = random_phantom(t, 3);
  REQUIRE(a.defects.size() == b.defects.size());
  for (std::size_t i = 0; i < a.defects.size(); ++i) CHECK(a.defects[i].center == b.defects[i].center);
  CHECK(a.defects.size() >= 20);
  const auto [vol, recs] = generate_phantom(a);  // throws if any pair touches
  CHECK(recs.front().voxel_count == 1);
  CHECK(recs[1].effective_diameter_um > 4 * t.voxel_size_um);
}

TEST_CASE("interior mask excludes the exterior and the surface layer") {
  PhantomSpec s = small_spec();
  const auto m = part_interior_mask(s, 1.0);
  CHECK(m[0] == 0);
  CHECK(m[(std::size_t(8) * 32 + 16) * 32 + 16] == 1);
  // block margins are 2 voxels in z; the first part slice has depth 0.5
  CHECK(m[(std::size_t(2) * 32 + 16) * 32 + 16] == 0);
  CHECK(m[(std::size_t(3) * 32 + 16) * 32 + 16] == 1);
}

TEST_CASE("datasets are byte-reproducible and guarded against overwrite") {
  PhantomTemplate t;
  t.dims = {16, 32, 32};
  t.n_defects = 5;
  t.max_diameter_vox = 4;
  DegradationSpec d;
  const auto a = temp_dir("ds_a"), b = temp_dir("ds_b");
  const Manifest ma = make_dataset(2, 1, t, d, a, 42);
  make_dataset(2, 1, t, d, b, 42);
  REQUIRE(ma.entries.size() == 3);
  for (const auto& e : ma.entries) {
    CHECK(file_checksum(a / raw_path(e.hr.stem())) == file_checksum(b / raw_path(e.hr.stem())));
    CHECK(file_checksum(a / raw_path(e.lr.stem())) == file_checksum(b / raw_path(e.lr.stem())));
  }
  CHECK(ma.split("train").size() == 2);
  CHECK(ma.split("test").size() == 1);
  CHECK_THROWS_AS(make_dataset(2, 1, t, d, a, 42), ValidationError);
  const Manifest loaded = load_manifest(a);
  CHECK(loaded.entries.size() == 3);
  CHECK(loaded.entries[2].split == "test");
  const Volume lr = load_volume(loaded.root / loaded.entries[0].lr);
  CHECK(lr.dims() == std::array<int, 3>{4, 8, 8});
  CHECK(derive_seed(42, "phantom", 0) != derive_seed(42, "phantom", 1));
  CHECK(derive_seed(42, "phantom", 0) != derive_seed(42, "degrade", 0));
}

TEST_CASE("file checksum is 64-bit FNV-1a") {
  const auto p = std::filesystem::temp_directory_path() / "xctsr_test_fnv.txt";
  {
    std::ofstream os(p, std::ios::binary);
    os << "a";
  }
  CHECK(file_checksum(p) == 0xaf63dc4c8601ec8cull);
}
