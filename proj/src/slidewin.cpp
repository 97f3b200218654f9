#include "xctsr/slidewin.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "xctsr/error.hpp"
#include "xctsr/json_fields.hpp"

namespace xctsr {

Blend parse_blend(const std::string& s) {
  if (s == "center_crop") return Blend::CenterCrop;
  if (s == "linear_feather") return Blend::LinearFeather;
  throw ValidationError("unknown blend '" + s + "' (expected center_crop, linear_feather)");
}

std::string to_string(Blend b) { return b == Blend::CenterCrop ? "center_crop" : "linear_feather"; }

void TileSpec::validate() const {
  for (int a = 0; a < 2; ++a) {
    require(overlap_yx[a] >= 0, "tiles.overlap_yx must be >= 0");
    require(tile_yx[a] > 2 * overlap_yx[a], "tiles.tile_yx must exceed twice the overlap");
  }
  require(z_chunk > 2 * overlap_yx[0], "tiles.z_chunk must exceed twice overlap_yx[0]");
}

nlohmann::json to_json(const TileSpec& t) {
  return {{"tile_yx", t.tile_yx}, {"overlap_yx", t.overlap_yx}, {"z_chunk", t.z_chunk}, {"blend", to_string(t.blend)}};
}

TileSpec tile_spec_from_json(const nlohmann::json& j) {
  check_keys(j, {"tile_yx", "overlap_yx", "z_chunk", "blend"}, "tiles");
  TileSpec t;
  read_field(j, "tile_yx", t.tile_yx, "tiles");
  read_field(j, "overlap_yx", t.overlap_yx, "tiles");
  read_field(j, "z_chunk", t.z_chunk, "tiles");
  if (j.contains("blend")) t.blend = parse_blend(j.at("blend").get<std::string>());
  t.validate();
  return t;
}

Volume pad_volume_z(const Volume& vol, int half_window) {
  require(half_window >= 0, "half_window must be >= 0");
  if (half_window == 0) return vol;
  const auto& d = vol.dims();
  Volume out = vol;
  out.grid = Grid({d[0] + 2 * half_window, d[1], d[2]});
  const std::size_t plane = std::size_t(d[1]) * d[2];
  for (int z = 0; z < out.grid.nz(); ++z) {
    const int src = std::clamp(z - half_window, 0, d[0] - 1);
    std::copy_n(vol.grid.slice(src), plane, out.grid.slice(z));
  }
  return out;
}

int z_factor_for(const Volume& lr, int scale) {
  const double target = lr.voxel_size.y / scale;
  const double f = lr.voxel_size.z / target;
  const long r = std::lround(f);
  require(r >= 1 && std::abs(f - double(r)) < 1e-6,
          "z voxel size is not an integer multiple of the super-resolved voxel size");
  return int(r);
}

Volume prepare_network_input(const Volume& lr, const NetworkSpec& spec) {
  spec.validate();
  lr.validate();
  const int zf = z_factor_for(lr, spec.scale);
  if (spec.family == Family::SRCNN) {
    Volume out = resample_axis(lr, 2, spec.scale, Interp::Cubic);
    out = resample_axis(out, 1, spec.scale, Interp::Cubic);
    return zf == 1 ? out : resample_z(out, zf, Interp::Cubic);
  }
  if (spec.dimensionality == Dimensionality::D3) {
    require(zf == spec.scale, "3D networks upsample all axes; the input must be isotropically degraded");
    return lr;
  }
  return zf == 1 ? lr : resample_z(lr, zf, Interp::Cubic);
}

Volume cubic_baseline(const Volume& lr, int scale) {
  Volume out = resample_axis(lr, 2, scale, Interp::Cubic);
  out = resample_axis(out, 1, scale, Interp::Cubic);
  const int zf = z_factor_for(lr, scale);
  return zf == 1 ? out : resample_z(out, zf, Interp::Cubic);
}

std::vector<int> tile_starts(int extent, int tile, int overlap) {
  require(extent >= 1 && tile >= 1, "tile extent must be positive");
  if (tile >= extent) return {0};
  const int step = tile - 2 * overlap;
  require(step >= 1, "tile must exceed twice the overlap");
  std::vector<int> s{0};
  while (s.back() + tile < extent) s.push_back(std::min(s.back() + step, extent - tile));
  return s;
}

namespace {

struct AxisTiles {
  int tile = 0;      // clamped tile extent (input grid)
  int overlap = 0;
  std::vector<int> starts;
  std::vector<int> lo, hi;  // owned region per tile (input grid), center_crop
};

AxisTiles plan_axis(int extent, int tile, int overlap, const char* axis, const WarningSink& warn) {
  AxisTiles a;
  a.tile = tile;
  a.overlap = overlap;
  if (tile > extent) {
    warn("tile " + std::to_string(tile) + " exceeds the " + axis + " extent " + std::to_string(extent) +
         "; clamped to " + std::to_string(extent));
    a.tile = extent;
  }
  a.starts = tile_starts(extent, a.tile, overlap);
  const std::size_t n = a.starts.size();
  a.lo.resize(n);
  a.hi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.hi[i] = i + 1 == n ? extent : a.starts[i] + a.tile - overlap;
    a.lo[i] = i == 0 ? 0 : a.hi[i - 1];
  }
  return a;
}

// Feather weight for output position t within a tile of output extent n; the
// ramp covers `ramp` voxels at edges that border another tile.
float feather(int t, int n, int ramp, bool left_edge_shared, bool right_edge_shared) {
  float w = 1.0f;
  if (ramp <= 0) return w;
  if (left_edge_shared) w = std::min(w, (float(t) + 0.5f) / float(ramp));
  if (right_edge_shared) w = std::min(w, (float(n - t) - 0.5f) / float(ramp));
  return std::max(w, 1e-6f);
}

WarningSink default_sink(const WarningSink& w) {
  if (w) return w;
  return [](const std::string& m) { std::cerr << "warning: " << m << "\n"; };
}

void check_finite(const Tensor& t, const std::string& where) {
  if (!all_finite(t)) throw RuntimeFailure("non-finite network output in tile " + where);
}

// Accumulates one tile's output into the result (r = output scale per axis).
struct Accumulator {
  Grid value, weight;
  Blend blend;

  void add(const float* tile, std::array<int, 3> tile_origin_out, std::array<int, 3> tile_extent_out,
           std::array<int, 3> lo_out, std::array<int, 3> hi_out, std::array<int, 3> ramp,
           std::array<bool, 3> shared_lo, std::array<bool, 3> shared_hi) {
    const auto& e = tile_extent_out;
    for (int z = 0; z < e[0]; ++z) {
      const int oz = tile_origin_out[0] + z;
      float wz = 1.0f;
      if (blend == Blend::CenterCrop) {
        if (oz < lo_out[0] || oz >= hi_out[0]) continue;
      } else {
        wz = feather(z, e[0], ramp[0], shared_lo[0], shared_hi[0]);
      }
      for (int y = 0; y < e[1]; ++y) {
        const int oy = tile_origin_out[1] + y;
        float wy = 1.0f;
        if (blend == Blend::CenterCrop) {
          if (oy < lo_out[1] || oy >= hi_out[1]) continue;
        } else {
          wy = feather(y, e[1], ramp[1], shared_lo[1], shared_hi[1]);
        }
        const float* row = tile + (std::size_t(z) * e[1] + y) * e[2];
        float* dst = value.data.data() + value.index(oz, oy, tile_origin_out[2]);
        float* wdst = weight.data.data() + weight.index(oz, oy, tile_origin_out[2]);
        for (int x = 0; x < e[2]; ++x) {
          const int ox = tile_origin_out[2] + x;
          if (blend == Blend::CenterCrop) {
            if (ox < lo_out[2] || ox >= hi_out[2]) continue;
            dst[x] = row[x];
          } else {
            const float w = wz * wy * feather(x, e[2], ramp[2], shared_lo[2], shared_hi[2]);
            dst[x] += w * row[x];
            wdst[x] += w;
          }
        }
      }
    }
  }

  Grid finish() {
    if (blend == Blend::LinearFeather) {
      for (std::size_t i = 0; i < value.data.size(); ++i) value.data[i] /= weight.data[i];
    }
    return std::move(value);
  }
};

Volume finish_volume(const Volume& input, Grid g, const NetworkSpec& spec) {
  Volume out(std::move(g), input.voxel_size, input.meta);
  const int s = spec.output_scale();
  out.voxel_size.y /= s;
  out.voxel_size.x /= s;
  if (spec.dimensionality == Dimensionality::D3) out.voxel_size.z /= s;
  out.meta["network"] = to_string(spec.family) + "-" + to_string(spec.dimensionality);
  return out;
}

Volume run_slices(Network& net, const Volume& input, const TileSpec& tiles, const WarningSink& warn) {
  const NetworkSpec& spec = net.spec();
  const auto d = input.dims();
  const int r = spec.output_scale();
  const int S = spec.dimensionality == Dimensionality::D25 ? spec.in_slices : 1;
  const int half = S / 2;
  const AxisTiles ay = plan_axis(d[1], tiles.tile_yx[0], tiles.overlap_yx[0], "y", warn);
  const AxisTiles ax = plan_axis(d[2], tiles.tile_yx[1], tiles.overlap_yx[1], "x", warn);
  const int ny = int(ay.starts.size()), nx = int(ax.starts.size());

  Accumulator acc{Grid({d[0], d[1] * r, d[2] * r}), Grid(), tiles.blend};
  if (tiles.blend == Blend::LinearFeather) acc.weight = Grid(acc.value.dims);

  net.set_training(false);
  Tensor batch(Shape{ny * nx, S, 1, ay.tile, ax.tile});
  for (int z = 0; z < d[0]; ++z) {
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        const int b = iy * nx + ix;
        for (int c = 0; c < S; ++c) {
          const int src = std::clamp(z + c - half, 0, d[0] - 1);
          for (int y = 0; y < ay.tile; ++y) {
            const float* row = input.grid.slice(src) + std::size_t(ay.starts[iy] + y) * d[2] + ax.starts[ix];
            std::copy_n(row, ax.tile, batch.ptr(b, c, 0, y, 0));
          }
        }
      }
    }
    const Tensor out = net.forward(batch);
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        const int b = iy * nx + ix;
        const Tensor t = take_sample(out, b);
        check_finite(t, "z=" + std::to_string(z) + " y=" + std::to_string(ay.starts[iy]) +
                            " x=" + std::to_string(ax.starts[ix]));
        acc.add(t.data(), {z, ay.starts[iy] * r, ax.starts[ix] * r}, {1, ay.tile * r, ax.tile * r},
                {z, ay.lo[iy] * r, ax.lo[ix] * r}, {z + 1, ay.hi[iy] * r, ax.hi[ix] * r},
                {0, ay.overlap * r, ax.overlap * r}, {false, iy > 0, ix > 0},
                {false, iy + 1 < ny, ix + 1 < nx});
      }
    }
  }
  return finish_volume(input, acc.finish(), spec);
}

Volume run_volumetric(Network& net, const Volume& input, const TileSpec& tiles, const WarningSink& warn) {
  const NetworkSpec& spec = net.spec();
  const auto d = input.dims();
  const int r = spec.output_scale();
  const AxisTiles az = plan_axis(d[0], tiles.z_chunk, tiles.overlap_yx[0], "z", warn);
  const AxisTiles ay = plan_axis(d[1], tiles.tile_yx[0], tiles.overlap_yx[0], "y", warn);
  const AxisTiles ax = plan_axis(d[2], tiles.tile_yx[1], tiles.overlap_yx[1], "x", warn);
  const int nz = int(az.starts.size()), ny = int(ay.starts.size()), nx = int(ax.starts.size());

  Accumulator acc{Grid({d[0] * r, d[1] * r, d[2] * r}), Grid(), tiles.blend};
  if (tiles.blend == Blend::LinearFeather) acc.weight = Grid(acc.value.dims);

  net.set_training(false);
  Tensor x(Shape{1, 1, az.tile, ay.tile, ax.tile});
  for (int iz = 0; iz < nz; ++iz) {
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        for (int z = 0; z < az.tile; ++z) {
          for (int y = 0; y < ay.tile; ++y) {
            const float* row = input.grid.data.data() +
                               input.grid.index(az.starts[iz] + z, ay.starts[iy] + y, ax.starts[ix]);
            std::copy_n(row, ax.tile, x.ptr(0, 0, z, y, 0));
          }
        }
        const Tensor out = net.forward(x);
        check_finite(out, "z=" + std::to_string(az.starts[iz]) + " y=" + std::to_string(ay.starts[iy]) +
                              " x=" + std::to_string(ax.starts[ix]));
        acc.add(out.data(), {az.starts[iz] * r, ay.starts[iy] * r, ax.starts[ix] * r},
                {az.tile * r, ay.tile * r, ax.tile * r}, {az.lo[iz] * r, ay.lo[iy] * r, ax.lo[ix] * r},
                {az.hi[iz] * r, ay.hi[iy] * r, ax.hi[ix] * r}, {az.overlap * r, ay.overlap * r, ax.overlap * r},
                {iz > 0, iy > 0, ix > 0}, {iz + 1 < nz, iy + 1 < ny, ix + 1 < nx});
      }
    }
  }
  return finish_volume(input, acc.finish(), spec);
}

}  // namespace

Volume super_resolve_volume(Network& net, const Volume& input, const TileSpec& tiles, const WarningSink& warn) {
  tiles.validate();
  input.validate();
  const WarningSink sink = default_sink(warn);
  if (net.spec().dimensionality == Dimensionality::D3) return run_volumetric(net, input, tiles, sink);
  return run_slices(net, input, tiles, sink);
}

Volume super_resolve(Network& net, const Volume& lr, const TileSpec& tiles, const WarningSink& warn) {
  return super_resolve_volume(net, prepare_network_input(lr, net.spec()), tiles, warn);
}

std::unique_ptr<Network> embed_2d_as_25d(Network& net2d, int in_slices) {
  const NetworkSpec& s2 = net2d.spec();
  require(s2.dimensionality == Dimensionality::D2, "embed_2d_as_25d needs a 2D network");
  require(in_slices >= 1 && in_slices % 2 == 1, "slice window must be odd");
  NetworkSpec s25 = s2;
  s25.dimensionality = Dimensionality::D25;
  s25.in_slices = in_slices;
  auto net = build_network(s25, 0);
  auto from = named_params(net2d);
  auto to = named_params(*net);
  require(from.size() == to.size(), "network layouts differ");
  const int centre = in_slices / 2;
  for (std::size_t i = 0; i < from.size(); ++i) {
    require(from[i].first == to[i].first, "parameter name mismatch: " + from[i].first + " vs " + to[i].first);
    const Tensor& a = from[i].second->value;
    Tensor& b = to[i].second->value;
    if (a.shape() == b.shape()) {
      std::copy_n(a.data(), a.numel(), b.data());
      continue;
    }
    // first convolution: (cout, 1, kd, kh, kw) -> (cout, in_slices, kd, kh, kw)
    require(a.shape().c == 1 && b.shape().c == in_slices && a.shape().n == b.shape().n &&
                a.shape().spatial() == b.shape().spatial(),
            "unexpected shape difference at " + from[i].first);
    b.fill(0.0f);
    for (int o = 0; o < a.shape().n; ++o) std::copy_n(a.channel(o, 0), a.shape().spatial(), b.channel(o, centre));
  }
  return net;
}

MemoryEstimate estimate_activation_memory(const NetworkSpec& spec, const Shape& input_shape, int batch) {
  require(batch >= 1, "batch must be >= 1");
  spec.validate();
  Shape in = input_shape;
  in.n = batch;
  auto net = build_network(spec, 0);
  const ActivationTrace acts = net->trace(in);
  MemoryEstimate m;
  m.batch = batch;
  m.parameters_bytes = count_parameters(*net).total * m.element_bytes;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const std::int64_t bytes = std::int64_t(acts[i].second) * m.element_bytes;
    m.per_layer.emplace_back(acts[i].first, bytes);
    m.total_activation_bytes += bytes;
    std::int64_t pair = bytes;
    if (i > 0) pair += std::int64_t(acts[i - 1].second) * m.element_bytes;
    m.peak_activation_bytes = std::max(m.peak_activation_bytes, pair);
  }
  return m;
}

}  // namespace xctsr
