#pragma once

#include <array>
#include <vector>

#include "xctsr/types.hpp"
#include "xctsr/volume.hpp"

namespace xctsr {

struct PatchPair {
  Grid input_window;          // (d_in, h_in, w_in)
  Grid target;                // (1, h_out, w_out), or a cube for 3D
  std::array<int, 3> origin;  // target corner (z, y, x) in the high-resolution volume
  Dimensionality mode = Dimensionality::D2;
};

struct WindowConfig {
  Dimensionality mode = Dimensionality::D2;
  int hr_patch = 128;
  int stride = 64;
  bool pre_upsampled = false;
  int in_slices = 7;  // used by 2.5D only; must be odd
  int scale = 4;
};

// Target origins of every window that fits, in (z, y, x) order.
std::vector<std::array<int, 3>> enumerate_window_origins(const std::array<int, 3>& lr_dims,
                                                         const std::array<int, 3>& hr_dims,
                                                         const WindowConfig& cfg);

PatchPair make_patch(const Grid& lr, const Grid& hr, const std::array<int, 3>& origin,
                     const WindowConfig& cfg);

// Every aligned (input window, target) pair. In 2.5D mode the input is
// `in_slices` consecutive slices and the target is the high-resolution slice
// under the centre slice.
std::vector<PatchPair> extract_training_windows(const Volume& lr, const Volume& hr,
                                                const WindowConfig& cfg);

// Per-axis count of in-plane window positions; zero when the patch does not fit.
int window_count(int extent, int patch, int stride);

}  // namespace xctsr
