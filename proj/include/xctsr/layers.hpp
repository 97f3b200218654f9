#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "xctsr/tensor.hpp"

namespace xctsr {

struct Param {
  Tensor value;
  Tensor grad;
};

using ParamVisitor = std::function<void(const std::string& name, Param& p)>;
// (layer path, activation element count) in forward order.
using ActivationTrace = std::vector<std::pair<std::string, std::size_t>>;

// A differentiable building block. forward() caches what backward() needs only
// while training; backward() must follow the matching forward() call.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual Shape output_shape(const Shape& in) const = 0;

  virtual void visit_params(const std::string& prefix, const ParamVisitor& fn) {
    (void)prefix;
    (void)fn;
  }
  // Appends one entry per produced tensor; default is a single output.
  virtual Shape trace(const Shape& in, const std::string& prefix, ActivationTrace& acts) const {
    Shape out = output_shape(in);
    acts.emplace_back(prefix, out.numel());
    return out;
  }
  virtual void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

 protected:
  bool training_ = false;
};

using LayerPtr = std::unique_ptr<Layer>;

struct Triple {
  int d = 1;
  int h = 1;
  int w = 1;
};

// N-d cross-correlation over (d, h, w) with zero padding. A 2D convolution is
// the special case kernel.d == 1, pad.d == 0.
class Conv : public Layer {
 public:
  Conv(int in_channels, int out_channels, Triple kernel, Triple stride, Triple pad, bool bias = true);

  // Same-padded stride-1 convolution; kernel sizes must be odd.
  static std::unique_ptr<Conv> same(int in_channels, int out_channels, Triple kernel, bool bias = true);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;
  void visit_params(const std::string& prefix, const ParamVisitor& fn) override;

  // Uniform fan-in initialisation in [-gain/sqrt(fan_in), gain/sqrt(fan_in)].
  void init_fan_in(std::mt19937_64& rng, float gain = 1.0f);

  // Strided variants for callers that keep several feature maps in one buffer.
  // `in` describes the view (in.c == in_channels()); sample i starts at
  // x + i * x_stride. The backward variant accumulates into dx and weight grads.
  void forward_view(const float* x, const Shape& in, std::size_t x_stride, float* y,
                    std::size_t y_stride) const;
  void backward_view(const float* x, const Shape& in, std::size_t x_stride, const float* gy,
                     std::size_t gy_stride, float* dx, std::size_t dx_stride);

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  Triple kernel() const { return k_; }
  bool has_bias() const { return has_bias_; }
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  int cin_, cout_;
  Triple k_, s_, p_;
  bool has_bias_;
  Param weight_;  // (cout, cin, kd, kh, kw) stored as Shape{cout, cin, kd, kh, kw}
  Param bias_;    // (cout)
  Tensor input_;
};

class LeakyReLU : public Layer {
 public:
  explicit LeakyReLU(float slope = 0.0f) : slope_(slope) {}
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override { return in; }

 private:
  float slope_;
  Tensor input_;
};

// Rearranges (c*r*r, h, w) into (c, h*r, w*r); 2D only.
class PixelShuffle : public Layer {
 public:
  explicit PixelShuffle(int factor) : r_(factor) {}
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;

 private:
  int r_;
};

class UpsampleNearest : public Layer {
 public:
  explicit UpsampleNearest(Triple factor) : f_(factor) {}
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;

 private:
  Triple f_;
  Shape in_shape_;
};

// Separable linear interpolation with half-pixel centres (align_corners = false).
// With factor on all three axes this is parameter-free trilinear upsampling.
class UpsampleLinear : public Layer {
 public:
  explicit UpsampleLinear(Triple factor) : f_(factor) {}
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;

 private:
  Triple f_;
  Shape in_shape_;
};

// Per-channel batch normalisation over (n, d, h, w).
class BatchNorm : public Layer {
 public:
  explicit BatchNorm(int channels, float momentum = 0.1f, float eps = 1e-5f);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override { return in; }
  void visit_params(const std::string& prefix, const ParamVisitor& fn) override;
  const std::vector<float>& running_mean() const { return running_mean_; }
  const std::vector<float>& running_var() const { return running_var_; }
  void set_running(std::vector<float> mean, std::vector<float> var);

 private:
  int c_;
  float momentum_, eps_;
  Param gamma_, beta_;
  std::vector<float> running_mean_, running_var_;
  Tensor xhat_;
  std::vector<float> inv_std_;
};

// Fully connected layer over the flattened per-sample features.
class Linear : public Layer {
 public:
  Linear(int in_features, int out_features);
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;
  void visit_params(const std::string& prefix, const ParamVisitor& fn) override;
  void init_fan_in(std::mt19937_64& rng, float gain = 1.0f);

 private:
  int in_, out_;
  Param weight_, bias_;
  Tensor input_;
};

// Ordered container of named children.
class Sequential : public Layer {
 public:
  Sequential() = default;
  Sequential& add(std::string name, LayerPtr layer);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  Shape output_shape(const Shape& in) const override;
  Shape trace(const Shape& in, const std::string& prefix, ActivationTrace& acts) const override;
  void visit_params(const std::string& prefix, const ParamVisitor& fn) override;
  void set_training(bool on) override;

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_[i].second; }
  const std::string& name_at(std::size_t i) const { return layers_[i].first; }

 private:
  std::vector<std::pair<std::string, LayerPtr>> layers_;
};

std::string join_name(const std::string& prefix, const std::string& name);

}  // namespace xctsr
