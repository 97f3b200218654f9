#include <doctest.h>

#include <random>

#include "xctsr/error.hpp"
#include "xctsr/patches.hpp"

using namespace xctsr;

namespace {

Grid ramp(std::array<int, 3> d) {
  Grid g(d);
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = float(i);
  return g;
}

// Counts windows by brute force: every origin on the stride lattice whose
// window fits inside the volume.
std::size_t brute_count(const std::array<int, 3>& hr, const WindowConfig& c) {
  std::size_t n = 0;
  for (int z = 0; z < hr[0]; ++z) {
    bool z_ok = false;
    switch (c.mode) {
      case Dimensionality::D2: z_ok = true; break;
      case Dimensionality::D25: z_ok = z - c.in_slices / 2 >= 0 && z + c.in_slices / 2 < hr[0]; break;
      case Dimensionality::D3: z_ok = z % c.stride == 0 && z + c.hr_patch <= hr[0]; break;
    }
    if (!z_ok) continue;
    for (int y = 0; y + c.hr_patch <= hr[1]; y += c.stride)
      for (int x = 0; x + c.hr_patch <= hr[2]; x += c.stride) ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("window enumeration matches brute-force counting") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> k(1, 4), mode(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    WindowConfig c;
    c.scale = 2;
    c.mode = Dimensionality(mode(rng));
    c.hr_patch = 2 * k(rng);
    c.stride = 2 * k(rng);
    c.in_slices = 2 * k(rng) - 1;
    const std::array<int, 3> lr{c.mode == Dimensionality::D3 ? k(rng) + 1 : 2 * k(rng) + 3, 3 * k(rng), 2 * k(rng) + 1};
    const std::array<int, 3> hr{c.mode == Dimensionality::D3 ? 2 * lr[0] : lr[0], 2 * lr[1], 2 * lr[2]};
    const auto origins = enumerate_window_origins(lr, hr, c);
    CHECK(origins.size() == brute_count(hr, c));
  }
}

TEST_CASE("2.5D windows stack neighbours around the target slice") {
  const Grid lr = ramp({9, 4, 4});
  const Grid hr = ramp({9, 16, 16});
  WindowConfig c;
  c.mode = Dimensionality::D25;
  c.hr_patch = 8;
  c.stride = 8;
  c.scale = 4;
  const PatchPair p = make_patch(lr, hr, {4, 8, 0}, c);
  CHECK(p.input_window.dims == std::array<int, 3>{7, 2, 2});
  CHECK(p.target.dims == std::array<int, 3>{1, 8, 8});
  for (int s = 0; s < 7; ++s) CHECK(p.input_window.at(s, 0, 0) == lr.at(1 + s, 2, 0));
  CHECK(p.target.at(0, 0, 0) == hr.at(4, 8, 0));
}

TEST_CASE("pre-upsampled and 3D windows") {
  WindowConfig c;
  c.mode = Dimensionality::D2;
  c.pre_upsampled = true;
  c.hr_patch = 4;
  c.stride = 4;
  const Grid hr = ramp({2, 8, 8});
  const PatchPair p = make_patch(hr, hr, {1, 4, 4}, c);
  CHECK(p.input_window == p.target);

  WindowConfig v;
  v.mode = Dimensionality::D3;
  v.hr_patch = 8;
  v.stride = 8;
  v.scale = 4;
  const Grid lr3 = ramp({4, 4, 4}), hr3 = ramp({16, 16, 16});
  const auto pp = extract_training_windows(Volume(lr3, {}), Volume(hr3, {}), v);
  CHECK(pp.size() == 8);
  CHECK(pp.back().input_window.dims == std::array<int, 3>{2, 2, 2});
  CHECK(pp.back().target.dims == std::array<int, 3>{8, 8, 8});
}

TEST_CASE("window configuration errors") {
  WindowConfig c;
  c.scale = 4;
  c.hr_patch = 10;
  CHECK_THROWS_AS(enumerate_window_origins({4, 8, 8}, {4, 32, 32}, c), ValidationError);
  c.hr_patch = 8;
  c.stride = 8;
  CHECK_THROWS_AS(enumerate_window_origins({4, 8, 8}, {4, 30, 32}, c), ValidationError);
  c.mode = Dimensionality::D25;
  c.in_slices = 4;
  CHECK_THROWS_AS(enumerate_window_origins({4, 8, 8}, {4, 32, 32}, c), ValidationError);
}
