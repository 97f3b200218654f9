#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "xctsr/checkpoint.hpp"
#include "xctsr/error.hpp"
#include "xctsr/slidewin.hpp"

using namespace xctsr;

namespace {

Volume random_volume(std::array<int, 3> dims, VoxelSize vs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Grid g(dims);
  for (auto& v : g.data) v = u(rng);
  return Volume(std::move(g), vs);
}

double max_diff(const Grid& a, const Grid& b) {
  REQUIRE(a.dims == b.dims);
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, double(std::abs(a.data[i] - b.data[i])));
  return m;
}

TileSpec whole(int n) {
  TileSpec t;
  t.tile_yx = {n, n};
  t.overlap_yx = {0, 0};
  t.z_chunk = n;
  return t;
}

}  // namespace

TEST_CASE("pad_volume_z replicates edge slices") {
  Grid g({3, 1, 1});
  g.data = {1, 2, 3};
  const Volume p = pad_volume_z(Volume(g, VoxelSize{}), 2);
  CHECK(p.grid.data == std::vector<float>{1, 1, 1, 2, 3, 3, 3});
  CHECK(pad_volume_z(Volume(g, VoxelSize{}), 0).grid == g);
}

TEST_CASE("tile starts cover the extent with the last tile at the end") {
  CHECK(tile_starts(64, 32, 8) == std::vector<int>{0, 16, 32});
  CHECK(tile_starts(70, 32, 8) == std::vector<int>{0, 16, 32, 38});
  CHECK(tile_starts(32, 32, 8) == std::vector<int>{0});
  std::mt19937 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int ov = int(rng() % 6);
    const int tile = 2 * ov + 1 + int(rng() % 20);
    const int extent = tile + int(rng() % 80);
    const auto s = tile_starts(extent, tile, ov);
    CHECK(s.front() == 0);
    CHECK(s.back() == extent - tile);
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i] - s[i - 1] <= tile - 2 * ov);
  }
}

TEST_CASE("2.5D inference keeps the slice count and scales the plane") {
  auto net = build_network(NetworkSpec::standard(Family::EDSR, Dimensionality::D25), 1);
  NetworkSpec s = net->spec();
  s.edsr_blocks = 1;
  s.features = 8;
  auto small = build_network(s, 1);
  const Volume lr = random_volume({20, 32, 32}, VoxelSize{1, 4, 4}, 5);
  const Volume sr = super_resolve(*small, lr, whole(32));
  CHECK(sr.dims() == std::array<int, 3>{20, 128, 128});
  CHECK(sr.voxel_size == VoxelSize{1, 1, 1});
  CHECK(sr.meta.at("network") == "edsr-2.5d");
}

TEST_CASE("a 2D network embedded as 2.5D ignores the neighbour slices") {
  NetworkSpec s = NetworkSpec::standard(Family::EDSR, Dimensionality::D2);
  s.edsr_blocks = 2;
  s.features = 16;
  auto net2d = build_network(s, 7);
  auto net25 = embed_2d_as_25d(*net2d, 7);
  CHECK(net25->spec().dimensionality == Dimensionality::D25);
  // Strong slice-to-slice noise: the embedded network must not see it.
  const Volume lr = random_volume({12, 16, 16}, VoxelSize{1, 4, 4}, 8);
  const Volume a = super_resolve(*net2d, lr, whole(16));
  const Volume b = super_resolve(*net25, lr, whole(16));
  CHECK(max_diff(a.grid, b.grid) <= 1e-5);
}

TEST_CASE("center-crop tiling with overlap above the receptive radius matches untiled SRCNN") {
  NetworkSpec s = NetworkSpec::standard(Family::SRCNN, Dimensionality::D2);
  s.features = 8;
  s.srcnn_mid_features = 4;
  auto net = build_network(s, 2);
  const Volume input = random_volume({2, 70, 53}, VoxelSize{1, 1, 1}, 4);
  const Volume ref = super_resolve_volume(*net, input, whole(80));
  TileSpec t;
  t.tile_yx = {28, 24};
  t.overlap_yx = {9, 10};
  const Volume tiled = super_resolve_volume(*net, input, t);
  CHECK(max_diff(ref.grid, tiled.grid) <= 1e-5);

  // A local network's tile seams disappear only with enough overlap.
  t.overlap_yx = {2, 2};
  CHECK(max_diff(ref.grid, super_resolve_volume(*net, input, t).grid) > 1e-3);
}

TEST_CASE("feathered blending is a normalised weighted average") {
  // Pointwise network: every tile predicts the same value at a shared voxel,
  // so any normalised blend reproduces the untiled output.
  NetworkSpec s = NetworkSpec::standard(Family::SRCNN, Dimensionality::D25);
  s.features = 8;
  s.srcnn_mid_features = 4;
  s.srcnn_kernels = {1, 1, 1};
  auto net = build_network(s, 2);
  const Volume input = random_volume({9, 60, 50}, VoxelSize{1, 1, 1}, 6);
  const Volume ref = super_resolve_volume(*net, input, whole(60));
  TileSpec t;
  t.tile_yx = {32, 24};
  t.overlap_yx = {10, 5};
  t.blend = Blend::LinearFeather;
  const Volume f = super_resolve_volume(*net, input, t);
  CHECK(max_diff(ref.grid, f.grid) <= 1e-5);

}

TEST_CASE("3D chunks are stitched over z") {
  NetworkSpec s = NetworkSpec::standard(Family::SRCNN, Dimensionality::D3);
  s.features = 4;
  s.srcnn_mid_features = 4;
  s.srcnn_kernels = {3, 3, 3};
  auto net = build_network(s, 3);
  const Volume input = random_volume({30, 20, 20}, VoxelSize{1, 1, 1}, 9);
  const Volume ref = super_resolve_volume(*net, input, whole(40), [](const std::string&) {});
  TileSpec t;
  t.tile_yx = {12, 12};
  t.overlap_yx = {3, 3};
  t.z_chunk = 10;
  const Volume tiled = super_resolve_volume(*net, input, t);
  CHECK(max_diff(ref.grid, tiled.grid) <= 1e-5);
}

TEST_CASE("oversized tiles are clamped with a warning") {
  NetworkSpec s = NetworkSpec::standard(Family::SRCNN, Dimensionality::D2);
  s.features = 4;
  s.srcnn_mid_features = 4;
  auto net = build_network(s, 2);
  std::vector<std::string> warnings;
  TileSpec t;
  t.tile_yx = {64, 16};
  t.overlap_yx = {4, 4};
  const Volume input = random_volume({1, 20, 40}, VoxelSize{1, 1, 1}, 1);
  const Volume out = super_resolve_volume(*net, input, t, [&](const std::string& w) { warnings.push_back(w); });
  CHECK(out.dims() == input.dims());
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0] == "tile 64 exceeds the y extent 20; clamped to 20");
}

TEST_CASE("network input preparation") {
  const Volume lr = random_volume({5, 8, 8}, VoxelSize{4, 4, 4}, 2);
  CHECK(z_factor_for(lr, 4) == 4);
  const auto edsr25 = NetworkSpec::standard(Family::EDSR, Dimensionality::D25);
  CHECK(prepare_network_input(lr, edsr25).dims() == std::array<int, 3>{20, 8, 8});
  const auto srcnn = NetworkSpec::standard(Family::SRCNN, Dimensionality::D2);
  CHECK(prepare_network_input(lr, srcnn).dims() == std::array<int, 3>{20, 32, 32});
  const auto edsr3 = NetworkSpec::standard(Family::EDSR, Dimensionality::D3);
  CHECK(prepare_network_input(lr, edsr3).dims() == std::array<int, 3>{5, 8, 8});
  CHECK(cubic_baseline(lr, 4).dims() == std::array<int, 3>{20, 32, 32});
  const Volume odd = random_volume({5, 8, 8}, VoxelSize{2.5, 4, 4}, 2);
  CHECK_THROWS_AS(z_factor_for(odd, 4), ValidationError);
  // A 3D learned upsampler needs the z spacing to shrink by exactly the scale.
  const Volume thick = random_volume({5, 8, 8}, VoxelSize{8, 4, 4}, 2);
  CHECK_THROWS_AS(prepare_network_input(thick, edsr3), ValidationError);
}

TEST_CASE("tile configuration is validated strictly") {
  TileSpec t;
  t.tile_yx = {16, 16};
  t.overlap_yx = {8, 2};
  CHECK_THROWS_AS(t.validate(), ValidationError);
  CHECK_THROWS_AS(tile_spec_from_json({{"tile", 3}}), ValidationError);
  const TileSpec d;
  CHECK(to_json(tile_spec_from_json(to_json(d))) == to_json(d));
  CHECK(parse_blend("linear_feather") == Blend::LinearFeather);
  CHECK_THROWS_AS(parse_blend("mean"), ValidationError);
}

TEST_CASE("activation memory estimate") {
  for (Family f : {Family::SRCNN, Family::EDSR, Family::ESRGAN}) {
    CAPTURE(to_string(f));
    const auto s2 = NetworkSpec::standard(f, Dimensionality::D2);
    const auto s25 = NetworkSpec::standard(f, Dimensionality::D25);
    const auto s3 = NetworkSpec::standard(f, Dimensionality::D3);
    const int hw = f == Family::SRCNN ? 128 : 32;
    const auto m2 = estimate_activation_memory(s2, s2.input_shape(1, hw, hw), 1);
    const auto m25 = estimate_activation_memory(s25, s25.input_shape(1, hw, hw), 1);
    const auto m3 = estimate_activation_memory(s3, s3.input_shape(1, hw, hw, 128), 1);
    CHECK(double(m25.total_bytes()) < 1.05 * double(m2.total_bytes()));
    CHECK(m25.total_bytes() > m2.total_bytes());
    CHECK(double(m3.total_bytes()) > 10.0 * double(m2.total_bytes()));

    const auto m2b = estimate_activation_memory(s2, s2.input_shape(1, hw, hw), 3);
    CHECK(m2b.total_activation_bytes == 3 * m2.total_activation_bytes);
    CHECK(m2b.parameters_bytes == m2.parameters_bytes);
  }
  // Closed form for SRCNN 2D: input, three convolutions and two activations.
  const auto s = NetworkSpec::standard(Family::SRCNN, Dimensionality::D2);
  const auto m = estimate_activation_memory(s, s.input_shape(1, 128, 128), 1);
  CHECK(m.total_activation_bytes == std::int64_t(4) * 128 * 128 * (1 + 64 + 64 + 32 + 32 + 1));
  CHECK(m.parameters_bytes == 4 * 57281);
}

TEST_CASE("checkpoint round trip preserves outputs") {
  NetworkSpec s = NetworkSpec::standard(Family::ESRGAN, Dimensionality::D25);
  s.esrgan_rrdb_blocks = 1;
  s.features = 8;
  s.esrgan_growth = 4;
  auto net = build_network(s, 11);
  const auto path = std::filesystem::temp_directory_path() / "xctsr_test_roundtrip.ckpt";
  save_checkpoint(*net, path, {{"note", "x"}});
  auto loaded = load_checkpoint(path);
  CHECK(loaded.net->spec() == s);
  CHECK(loaded.meta.at("note") == "x");
  const Volume lr = random_volume({9, 8, 8}, VoxelSize{1, 4, 4}, 3);
  CHECK(max_diff(super_resolve(*net, lr, whole(8)).grid, super_resolve(*loaded.net, lr, whole(8)).grid) == 0.0);
}
