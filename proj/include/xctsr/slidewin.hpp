#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xctsr/network.hpp"
#include "xctsr/volume.hpp"

namespace xctsr {

enum class Blend { CenterCrop, LinearFeather };
Blend parse_blend(const std::string& s);
std::string to_string(Blend b);

// Tile sizes and overlaps are measured on the network-input grid (the LR grid
// for learned upsamplers, the interpolated grid for SRCNN). The 3D z overlap
// reuses overlap_yx[0].
struct TileSpec {
  std::array<int, 2> tile_yx{64, 64};
  std::array<int, 2> overlap_yx{8, 8};
  int z_chunk = 32;
  Blend blend = Blend::CenterCrop;

  void validate() const;
};

nlohmann::json to_json(const TileSpec& t);
TileSpec tile_spec_from_json(const nlohmann::json& j);

// Replicates the first and last slice half_window times.
Volume pad_volume_z(const Volume& vol, int half_window);

// Integer z upsampling needed to bring `lr` onto an isotropic grid whose
// in-plane voxel is lr.voxel_size.y / scale.
int z_factor_for(const Volume& lr, int scale);

// Moves a degraded volume onto the grid the network consumes: cubic z
// resampling for 2D/2.5D, plus in-plane cubic upsampling for SRCNN; 3D
// learned-upsampler networks take the raw volume.
Volume prepare_network_input(const Volume& lr, const NetworkSpec& spec);

// Cubic interpolation of `lr` onto the super-resolved grid.
Volume cubic_baseline(const Volume& lr, int scale);

// Warning sink for tile clamping; defaults to stderr.
using WarningSink = std::function<void(const std::string&)>;

// `input` must already be on the network-input grid (prepare_network_input).
Volume super_resolve_volume(Network& net, const Volume& input, const TileSpec& tiles,
                            const WarningSink& warn = {});

// prepare_network_input followed by super_resolve_volume.
Volume super_resolve(Network& net, const Volume& lr, const TileSpec& tiles, const WarningSink& warn = {});

// A 2.5D network whose first-layer weights equal net2d's on the centre plane
// and zero on the neighbours; all other weights are copied.
std::unique_ptr<Network> embed_2d_as_25d(Network& net2d, int in_slices = 7);

// Tile start positions along one axis (last tile aligned to the end).
std::vector<int> tile_starts(int extent, int tile, int overlap);

struct MemoryEstimate {
  std::int64_t parameters_bytes = 0;
  std::int64_t peak_activation_bytes = 0;
  std::int64_t total_activation_bytes = 0;
  std::vector<std::pair<std::string, std::int64_t>> per_layer;
  int batch = 1;
  int element_bytes = 4;

  std::int64_t total_bytes() const { return parameters_bytes + total_activation_bytes; }
};

// Sums every forward output (and the network input) at 4 bytes/element, plus
// parameter bytes. `input_shape` is the per-sample network input; its n is
// replaced by `batch`.
MemoryEstimate estimate_activation_memory(const NetworkSpec& spec, const Shape& input_shape, int batch);

}  // namespace xctsr
