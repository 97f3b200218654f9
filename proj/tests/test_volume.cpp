#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "xctsr/error.hpp"
#include "xctsr/volume.hpp"

using namespace xctsr;

namespace {

Volume random_volume(std::array<int, 3> dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Grid g(dims);
  for (float& v : g.data) v = u(rng);
  return Volume(g, VoxelSize{4.0, 2.0, 2.0});
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xctsr_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("resampling by factor 1 is the identity for every method") {
  const Volume v = random_volume({5, 6, 7}, 1);
  for (Interp m : {Interp::Nearest, Interp::Linear, Interp::Cubic}) {
    for (int axis = 0; axis < 3; ++axis) CHECK(resample_axis(v, axis, 1.0, m).grid == v.grid);
  }
}

TEST_CASE("linear and cubic resampling reproduce a linear ramp away from the edges") {
  Grid g({8, 3, 3});
  for (int z = 0; z < 8; ++z)
    for (int i = 0; i < 9; ++i) g.data[std::size_t(z) * 9 + i] = 0.5f * z + 1.0f;
  const Volume v(g, VoxelSize{4, 1, 1});
  for (Interp m : {Interp::Linear, Interp::Cubic}) {
    const Volume r = resample_z(v, 4.0, m);
    REQUIRE(r.dims()[0] == 32);
    CHECK(r.voxel_size.z == doctest::Approx(1.0));
    // interior outputs sample z_in = (j + 0.5) / 4 - 0.5; cubic needs two taps each side
    const int first = m == Interp::Linear ? 2 : 6, last = m == Interp::Linear ? 29 : 25;
    for (int j = first; j <= last; ++j) {
      const double zin = (j + 0.5) / 4.0 - 0.5;
      CHECK(r.grid.at(j, 1, 1) == doctest::Approx(0.5 * zin + 1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("resampling preserves constants and changes voxel size") {
  const Volume v(Grid({4, 4, 4}, 0.25f), VoxelSize{8, 8, 8});
  const Volume r = resample_all(v, 2.0, Interp::Cubic);
  CHECK(r.dims() == std::array<int, 3>{8, 8, 8});
  for (float x : r.grid.data) CHECK(x == doctest::Approx(0.25f));
  CHECK(r.voxel_size == VoxelSize{4, 4, 4});
}

TEST_CASE("normalisation maps bounds to [0, 1] and records them") {
  Grid g({1, 1, 4});
  g.data = {-1.0f, 0.0f, 1.0f, 3.0f};
  const Volume n = normalize_volume(Volume(g, {}), 0.0, 2.0);
  CHECK(n.grid.data == std::vector<float>{0.0f, 0.0f, 0.5f, 1.0f});
  CHECK(n.meta.at("normalization_lo") == "0");
  CHECK(n.meta.at("normalization_hi") == "2");
  CHECK_THROWS_AS(normalize_volume(n, 1.0, 1.0), ValidationError);
}

TEST_CASE("validation names the first non-finite voxel") {
  Volume v(Grid({2, 2, 2}), {});
  v.grid.at(1, 0, 1) = std::numeric_limits<float>::quiet_NaN();
  try {
    v.validate();
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("(1, 0, 1)") != std::string::npos);
  }
}

TEST_CASE("volume files round-trip bit-exactly and detect truncation") {
  const auto dir = temp_dir("volume");
  Volume v = random_volume({3, 4, 5}, 2);
  v.meta["origin"] = "test";
  save_volume(v, dir / "vol");
  const Volume r = load_volume(dir / "vol");
  CHECK(r.grid == v.grid);
  CHECK(r.voxel_size == v.voxel_size);
  CHECK(r.meta.at("origin") == "test");
  CHECK(load_volume(dir / "vol.json").grid == v.grid);
  CHECK(load_volume(dir / "vol.raw").grid == v.grid);
  std::filesystem::resize_file(dir / "vol.raw", 10);
  CHECK_THROWS(load_volume(dir / "vol"));
}

TEST_CASE("grid crop copies the requested block") {
  Grid g({3, 3, 3});
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = float(i);
  const Grid c = g.crop({1, 1, 1}, {2, 2, 2});
  CHECK(c.at(0, 0, 0) == g.at(1, 1, 1));
  CHECK(c.at(1, 1, 1) == g.at(2, 2, 2));
  CHECK_THROWS_AS(g.crop({2, 2, 2}, {2, 2, 2}), ValidationError);
}
