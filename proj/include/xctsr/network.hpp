#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "xctsr/layers.hpp"
#include "xctsr/tensor.hpp"
#include "xctsr/types.hpp"

namespace xctsr {

struct NetworkSpec {
  Family family = Family::SRCNN;
  Dimensionality dimensionality = Dimensionality::D2;
  int scale = 4;
  int in_slices = 1;
  int features = 64;
  int srcnn_mid_features = 32;
  std::array<int, 3> srcnn_kernels{9, 5, 5};
  int edsr_blocks = 16;
  double edsr_residual_scale = 1.0;
  int esrgan_rrdb_blocks = 23;
  int esrgan_growth = 32;

  // Reference configuration for a family; 2.5D defaults to a 7-slice window.
  static NetworkSpec standard(Family f, Dimensionality d);

  void validate() const;

  // SRCNN consumes input already interpolated onto the output grid.
  bool pre_upsampled() const { return family == Family::SRCNN; }
  bool learned_upsampler() const { return !pre_upsampled() && dimensionality != Dimensionality::D3; }
  // Ratio between output and input voxel counts per in-plane axis.
  int output_scale() const { return pre_upsampled() ? 1 : scale; }
  // First convolution kernel extent (m = n) and width (k).
  int first_kernel() const { return family == Family::SRCNN ? srcnn_kernels[0] : 3; }
  int first_features() const { return features; }

  // Network input tensor shape for a batch of windows. For 3D, `depth` is the
  // cube depth; for 2D/2.5D it is ignored (slices sit on the channel axis).
  Shape input_shape(int batch, int h, int w, int depth = 1) const;
  Shape output_shape(const Shape& input) const;

  bool operator==(const NetworkSpec&) const = default;
};

// A generator network: a root layer plus its spec.
class Network {
 public:
  Network(NetworkSpec spec, LayerPtr root) : spec_(std::move(spec)), root_(std::move(root)) {}

  const NetworkSpec& spec() const { return spec_; }

  // Rejects inputs that do not match the spec's input contract.
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void set_training(bool on) { root_->set_training(on); }

  void visit_params(const ParamVisitor& fn) { root_->visit_params("", fn); }
  void zero_grad();
  ActivationTrace trace(const Shape& input) const;

 private:
  void check_input(const Shape& s) const;

  NetworkSpec spec_;
  LayerPtr root_;
};

// Builds the generator for `spec`. Weights are fan-in uniform from `seed`,
// ESRGAN convolutions additionally scaled by 0.1.
std::unique_ptr<Network> build_network(const NetworkSpec& spec, std::uint64_t seed = 0);

// Relativistic discriminator of the staged VGG-style design. Applied to single
// slices for 2D/2.5D specs and to sub-volumes for 3D specs. `input_size` must be
// a multiple of 32 (five stride-2 stages).
class Discriminator {
 public:
  Discriminator(bool volumetric, int input_size, LayerPtr root)
      : volumetric_(volumetric), input_size_(input_size), root_(std::move(root)) {}

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out) { return root_->backward(grad_out); }
  void set_training(bool on) { root_->set_training(on); }
  void visit_params(const ParamVisitor& fn) { root_->visit_params("", fn); }
  void zero_grad();
  bool volumetric() const { return volumetric_; }
  int input_size() const { return input_size_; }

 private:
  bool volumetric_;
  int input_size_;
  LayerPtr root_;
};

std::unique_ptr<Discriminator> build_discriminator(const NetworkSpec& spec, int input_size = 128,
                                                   int base_features = 64, std::uint64_t seed = 0);

struct ParamReport {
  std::vector<std::pair<std::string, std::int64_t>> per_layer;
  std::int64_t total = 0;
  std::int64_t first_layer_delta_vs_2d = 0;
  int kernel_m = 0;
  int kernel_n = 0;
  int first_layer_features_k = 0;
};

ParamReport count_parameters(Network& net);
ParamReport count_parameters(Discriminator& disc);

// (in_slices(2.5D) - 1) * m * n * k for two specs that differ only in the slice window.
std::int64_t first_layer_parameter_delta(const NetworkSpec& spec_2d, const NetworkSpec& spec_25d);

// Parameter values by name, in visit order.
std::vector<std::pair<std::string, Param*>> named_params(Network& net);

}  // namespace xctsr
