#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xctsr/layers.hpp"
#include "xctsr/tensor.hpp"

namespace xctsr {

enum class PixelLossKind { L1, L2 };
PixelLossKind parse_pixel_loss(const std::string& s);
std::string to_string(PixelLossKind k);

// Mean absolute (L1) or mean squared (L2) difference over all elements.
double pixel_loss(const Tensor& pred, const Tensor& target, PixelLossKind kind);
// Same value; writes dL/dpred into *grad (resized to pred's shape).
double pixel_loss_grad(const Tensor& pred, const Tensor& target, PixelLossKind kind, Tensor* grad);

struct RaganLosses {
  double d_loss = 0.0;
  double g_loss = 0.0;
};

// Relativistic average losses with D_ra(r) = sigmoid(r - mean(fake)) and
// D_ra(f) = sigmoid(f - mean(real)); log-sigmoid evaluated stably.
RaganLosses ragan_losses(std::span<const double> real_logits, std::span<const double> fake_logits);

struct RaganGradients {
  RaganLosses losses;
  std::vector<double> d_wrt_real, d_wrt_fake;  // d(d_loss)/d(logit)
  std::vector<double> g_wrt_real, g_wrt_fake;  // d(g_loss)/d(logit)
};
RaganGradients ragan_gradients(std::span<const double> real_logits, std::span<const double> fake_logits);

enum class ExtractorKind { FixedRandomConv, ExternalPretrained, Identity };

struct FeatureExtractorSpec {
  ExtractorKind kind = ExtractorKind::FixedRandomConv;
  // 1-based convolution index whose output (before its activation) is compared.
  int tap_point = 4;
  std::uint64_t seed = 0;
  std::filesystem::path weights;  // ExternalPretrained only
};

ExtractorKind parse_extractor_kind(const std::string& s);
std::string to_string(ExtractorKind k);

// Frozen convolutional feature map used by the perceptual loss. Slices are
// processed independently (2D kernels), so 3D outputs work unchanged.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const FeatureExtractorSpec& spec);

  Tensor features(const Tensor& x);
  // Gradient w.r.t. the input of the last features() call.
  Tensor backward(const Tensor& grad_features);

  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }
  const FeatureExtractorSpec& spec() const { return spec_; }

 private:
  FeatureExtractorSpec spec_;
  Sequential stack_;
  bool frozen_ = true;
};

// External extractor weights: 8-byte magic "XCTSRFX1", u64 JSON header length,
// header {"layers": [{"in": c, "out": c, "kernel": k}, ...]}, then per layer
// float32 weights (out, in, k, k) followed by biases (out).
void save_extractor_weights(const std::filesystem::path& path, const std::vector<std::array<int, 3>>& layers,
                            std::span<const float> values);

// Mean squared difference of pre-activation feature maps.
double perceptual_loss(const Tensor& pred, const Tensor& target, FeatureExtractor& extractor);
double perceptual_loss_grad(const Tensor& pred, const Tensor& target, FeatureExtractor& extractor,
                            Tensor* grad);

}  // namespace xctsr
