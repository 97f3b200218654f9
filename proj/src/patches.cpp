#include "xctsr/patches.hpp"

#include "xctsr/error.hpp"

namespace xctsr {

namespace {

void check_config(const std::array<int, 3>& lr, const std::array<int, 3>& hr, const WindowConfig& c) {
  require(c.hr_patch >= 1 && c.stride >= 1, "patch size and stride must be positive");
  require(c.scale >= 1, "scale must be positive");
  if (c.mode == Dimensionality::D25) {
    require(c.in_slices >= 1 && c.in_slices % 2 == 1, "2.5D window must have an odd slice count");
  }
  if (c.pre_upsampled) {
    require(lr == hr, "pre-upsampled input must share the high-resolution grid");
    return;
  }
  require(c.hr_patch % c.scale == 0, "hr_patch " + std::to_string(c.hr_patch) +
                                         " is not divisible by the scale factor " +
                                         std::to_string(c.scale));
  require(c.stride % c.scale == 0, "stride must be a multiple of the scale factor");
  require(hr[1] == c.scale * lr[1] && hr[2] == c.scale * lr[2],
          "high-resolution in-plane dims must be exactly " + std::to_string(c.scale) +
              "x the low-resolution dims");
  if (c.mode == Dimensionality::D3) {
    require(hr[0] == c.scale * lr[0], "3D mode needs high-resolution depth = scale x low-resolution depth");
  } else {
    require(hr[0] == lr[0], "low- and high-resolution volumes must share the z grid (resample z first)");
  }
}

}  // namespace

int window_count(int extent, int patch, int stride) {
  if (extent < patch) return 0;
  return (extent - patch) / stride + 1;
}

std::vector<std::array<int, 3>> enumerate_window_origins(const std::array<int, 3>& lr_dims,
                                                         const std::array<int, 3>& hr_dims,
                                                         const WindowConfig& cfg) {
  check_config(lr_dims, hr_dims, cfg);
  std::vector<std::array<int, 3>> out;
  const int ny = window_count(hr_dims[1], cfg.hr_patch, cfg.stride);
  const int nx = window_count(hr_dims[2], cfg.hr_patch, cfg.stride);
  std::vector<int> zs;
  switch (cfg.mode) {
    case Dimensionality::D2:
      for (int z = 0; z < hr_dims[0]; ++z) zs.push_back(z);
      break;
    case Dimensionality::D25: {
      const int half = cfg.in_slices / 2;
      for (int z = half; z + half < hr_dims[0]; ++z) zs.push_back(z);
      break;
    }
    case Dimensionality::D3: {
      const int nz = window_count(hr_dims[0], cfg.hr_patch, cfg.stride);
      for (int i = 0; i < nz; ++i) zs.push_back(i * cfg.stride);
      break;
    }
  }
  for (int z : zs) {
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) out.push_back({z, iy * cfg.stride, ix * cfg.stride});
    }
  }
  return out;
}

PatchPair make_patch(const Grid& lr, const Grid& hr, const std::array<int, 3>& o, const WindowConfig& cfg) {
  PatchPair p;
  p.origin = o;
  p.mode = cfg.mode;
  const int s = cfg.pre_upsampled ? 1 : cfg.scale;
  const int P = cfg.hr_patch;
  switch (cfg.mode) {
    case Dimensionality::D2:
      p.input_window = lr.crop({o[0], o[1] / s, o[2] / s}, {1, P / s, P / s});
      p.target = hr.crop(o, {1, P, P});
      break;
    case Dimensionality::D25: {
      const int half = cfg.in_slices / 2;
      p.input_window = lr.crop({o[0] - half, o[1] / s, o[2] / s}, {cfg.in_slices, P / s, P / s});
      p.target = hr.crop(o, {1, P, P});
      break;
    }
    case Dimensionality::D3:
      p.input_window = lr.crop({o[0] / s, o[1] / s, o[2] / s}, {P / s, P / s, P / s});
      p.target = hr.crop(o, {P, P, P});
      break;
  }
  return p;
}

std::vector<PatchPair> extract_training_windows(const Volume& lr, const Volume& hr, const WindowConfig& cfg) {
  std::vector<PatchPair> out;
  for (const auto& o : enumerate_window_origins(lr.dims(), hr.dims(), cfg)) {
    out.push_back(make_patch(lr.grid, hr.grid, o, cfg));
  }
  return out;
}

}  // namespace xctsr
