#include "xctsr/network.hpp"

#include <algorithm>
#include <map>

#include "xctsr/error.hpp"

namespace xctsr {

std::string to_string(Family f) {
  switch (f) {
    case Family::SRCNN: return "srcnn";
    case Family::EDSR: return "edsr";
    case Family::ESRGAN: return "esrgan";
  }
  return "?";
}

std::string to_string(Dimensionality d) {
  switch (d) {
    case Dimensionality::D2: return "2d";
    case Dimensionality::D25: return "2.5d";
    case Dimensionality::D3: return "3d";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "srcnn") return Family::SRCNN;
  if (l == "edsr") return Family::EDSR;
  if (l == "esrgan") return Family::ESRGAN;
  throw ValidationError("unknown network family '" + s + "' (expected srcnn, edsr, esrgan)");
}

Dimensionality parse_dimensionality(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "2d") return Dimensionality::D2;
  if (l == "2.5d" || l == "25d") return Dimensionality::D25;
  if (l == "3d") return Dimensionality::D3;
  throw ValidationError("unknown dimensionality '" + s + "' (expected 2d, 2.5d, 3d)");
}

NetworkSpec NetworkSpec::standard(Family f, Dimensionality d) {
  NetworkSpec s;
  s.family = f;
  s.dimensionality = d;
  s.in_slices = d == Dimensionality::D25 ? 7 : 1;
  return s;
}

namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void NetworkSpec::validate() const {
  require(scale >= 1, "scale must be >= 1");
  require(features >= 1 && srcnn_mid_features >= 1, "feature widths must be positive");
  for (int k : srcnn_kernels) require(k >= 1 && k % 2 == 1, "SRCNN kernel sizes must be odd");
  require(edsr_blocks >= 0 && esrgan_rrdb_blocks >= 0, "block counts must be >= 0");
  require(esrgan_growth >= 1, "ESRGAN growth must be positive");
  require(in_slices >= 1 && in_slices % 2 == 1, "in_slices must be odd, got " + std::to_string(in_slices));
  switch (dimensionality) {
    case Dimensionality::D2:
      require(in_slices == 1, "2D networks take exactly one slice");
      break;
    case Dimensionality::D25:
      require(in_slices > 1, "2.5D networks take more than one slice");
      break;
    case Dimensionality::D3:
      require(in_slices == 1, "3D networks take a single-channel volume (in_slices = 1)");
      break;
  }
  if (learned_upsampler()) {
    require(is_power_of_two(scale),
            "learned upsampler needs a power-of-two scale, got " + std::to_string(scale));
  }
}

Shape NetworkSpec::input_shape(int batch, int h, int w, int depth) const {
  if (dimensionality == Dimensionality::D3) return Shape{batch, 1, depth, h, w};
  return Shape{batch, in_slices, 1, h, w};
}

Shape NetworkSpec::output_shape(const Shape& in) const {
  const int s = output_scale();
  if (dimensionality == Dimensionality::D3) return Shape{in.n, 1, in.d * s, in.h * s, in.w * s};
  return Shape{in.n, 1, 1, in.h * s, in.w * s};
}

// ---------------------------------------------------------------- blocks

namespace {

// out = x + scale * inner(x)
class Residual : public Layer {
 public:
  Residual(LayerPtr inner, float scale) : inner_(std::move(inner)), scale_(scale) {}

  Tensor forward(const Tensor& x) override {
    Tensor out = inner_->forward(x);
    require(out.shape() == x.shape(), "residual branch changed shape");
    float* o = out.data();
    const float* xi = x.data();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = xi[i] + scale_ * o[i];
    return out;
  }
  Tensor backward(const Tensor& grad_out) override {
    Tensor g = grad_out;
    if (scale_ != 1.0f) {
      for (float& v : g.values()) v *= scale_;
    }
    Tensor gx = inner_->backward(g);
    add_inplace(gx, grad_out);
    return gx;
  }
  Shape output_shape(const Shape& in) const override { return in; }
  Shape trace(const Shape& in, const std::string& prefix, ActivationTrace& acts) const override {
    inner_->trace(in, prefix, acts);
    acts.emplace_back(join_name(prefix, "add"), in.numel());
    return in;
  }
  void visit_params(const std::string& prefix, const ParamVisitor& fn) override {
    inner_->visit_params(prefix, fn);
  }
  void set_training(bool on) override {
    training_ = on;
    inner_->set_training(on);
  }

 private:
  LayerPtr inner_;
  float scale_;
};

// Residual dense block: five convolutions over a growing concatenation,
// LeakyReLU(0.2) after the first four, output scaled by 0.2 onto the input.
class DenseBlock : public Layer {
 public:
  DenseBlock(int features, int growth, Triple kernel, std::mt19937_64& rng, float gain)
      : nf_(features), gc_(growth) {
    for (int k = 0; k < 5; ++k) {
      const int cin = nf_ + k * gc_;
      const int cout = k == 4 ? nf_ : gc_;
      convs_.push_back(Conv::same(cin, cout, kernel));
      convs_.back()->init_fan_in(rng, gain);
    }
  }

  Tensor forward(const Tensor& x) override {
    const Shape s = x.shape();
    require(s.c == nf_, "dense block channel mismatch");
    Shape cs = s;
    cs.c = nf_ + 4 * gc_;
    Tensor cat(cs);
    const std::size_t sp = s.spatial();
    const std::size_t cat_stride = cs.per_sample();
    for (int n = 0; n < s.n; ++n) std::copy(x.sample(n), x.sample(n) + s.per_sample(), cat.sample(n));
    for (int k = 0; k < 4; ++k) {
      Shape view = s;
      view.c = nf_ + k * gc_;
      float* dst = cat.data() + std::size_t(nf_ + k * gc_) * sp;
      convs_[k]->forward_view(cat.data(), view, cat_stride, dst, cat_stride);
      for (int n = 0; n < s.n; ++n) {
        float* p = dst + n * cat_stride;
        for (std::size_t i = 0; i < gc_ * sp; ++i) p[i] = p[i] > 0.0f ? p[i] : 0.2f * p[i];
      }
    }
    Tensor out(s);
    Shape view = s;
    view.c = nf_ + 4 * gc_;
    convs_[4]->forward_view(cat.data(), view, cat_stride, out.data(), s.per_sample());
    float* o = out.data();
    const float* xi = x.data();
    for (std::size_t i = 0; i < out.numel(); ++i) o[i] = xi[i] + 0.2f * o[i];
    if (training_) cat_ = std::move(cat);
    return out;
  }

  Tensor backward(const Tensor& grad_out) override {
    require(!cat_.empty(), "dense block backward without cached forward");
    const Shape cs = cat_.shape();
    Shape s = cs;
    s.c = nf_;
    const std::size_t sp = s.spatial();
    const std::size_t cat_stride = cs.per_sample();
    Tensor gcat(cs);
    Tensor g5 = grad_out;
    for (float& v : g5.values()) v *= 0.2f;
    Shape view = s;
    view.c = nf_ + 4 * gc_;
    convs_[4]->backward_view(cat_.data(), view, cat_stride, g5.data(), s.per_sample(), gcat.data(),
                             cat_stride);
    for (int k = 3; k >= 0; --k) {
      const std::size_t off = std::size_t(nf_ + k * gc_) * sp;
      for (int n = 0; n < s.n; ++n) {
        const float* a = cat_.data() + n * cat_stride + off;
        float* g = gcat.data() + n * cat_stride + off;
        for (std::size_t i = 0; i < gc_ * sp; ++i) {
          if (!(a[i] > 0.0f)) g[i] *= 0.2f;
        }
      }
      view.c = nf_ + k * gc_;
      convs_[k]->backward_view(cat_.data(), view, cat_stride, gcat.data() + off, cat_stride,
                               gcat.data(), cat_stride);
    }
    Tensor gx = grad_out;
    for (int n = 0; n < s.n; ++n) {
      const float* g = gcat.data() + n * cat_stride;
      float* d = gx.sample(n);
      for (std::size_t i = 0; i < s.per_sample(); ++i) d[i] += g[i];
    }
    return gx;
  }

  Shape output_shape(const Shape& in) const override { return in; }

  Shape trace(const Shape& in, const std::string& prefix, ActivationTrace& acts) const override {
    Shape g = in;
    g.c = gc_;
    for (int k = 0; k < 4; ++k) {
      acts.emplace_back(join_name(prefix, "conv" + std::to_string(k + 1)), g.numel());
      acts.emplace_back(join_name(prefix, "lrelu" + std::to_string(k + 1)), g.numel());
    }
    acts.emplace_back(join_name(prefix, "conv5"), in.numel());
    acts.emplace_back(join_name(prefix, "add"), in.numel());
    return in;
  }

  void visit_params(const std::string& prefix, const ParamVisitor& fn) override {
    for (int k = 0; k < 5; ++k) convs_[k]->visit_params(join_name(prefix, "conv" + std::to_string(k + 1)), fn);
  }

 private:
  int nf_, gc_;
  std::vector<std::unique_ptr<Conv>> convs_;
  Tensor cat_;
};

struct Builder {
  std::mt19937_64 rng;
  float gain = 1.0f;
  bool volumetric = false;

  Triple cube(int k) const { return volumetric ? Triple{k, k, k} : Triple{1, k, k}; }

  LayerPtr conv(int cin, int cout, int k, bool bias = true) {
    auto c = Conv::same(cin, cout, cube(k), bias);
    c->init_fan_in(rng, gain);
    return c;
  }
};

LayerPtr build_srcnn(const NetworkSpec& s, Builder& b) {
  auto seq = std::make_unique<Sequential>();
  seq->add("conv1", b.conv(s.in_slices, s.features, s.srcnn_kernels[0]));
  seq->add("relu1", std::make_unique<LeakyReLU>(0.0f));
  seq->add("conv2", b.conv(s.features, s.srcnn_mid_features, s.srcnn_kernels[1]));
  seq->add("relu2", std::make_unique<LeakyReLU>(0.0f));
  seq->add("conv3", b.conv(s.srcnn_mid_features, 1, s.srcnn_kernels[2]));
  return seq;
}

int log2_int(int v) {
  int r = 0;
  while (v > 1) {
    v >>= 1;
    ++r;
  }
  return r;
}

LayerPtr build_edsr(const NetworkSpec& s, Builder& b) {
  const int nf = s.features;
  auto seq = std::make_unique<Sequential>();
  if (b.volumetric && s.scale > 1) {
    seq->add("upsample", std::make_unique<UpsampleLinear>(Triple{s.scale, s.scale, s.scale}));
  }
  seq->add("head", b.conv(s.in_slices, nf, 3));
  auto body = std::make_unique<Sequential>();
  for (int i = 0; i < s.edsr_blocks; ++i) {
    auto block = std::make_unique<Sequential>();
    block->add("conv1", b.conv(nf, nf, 3));
    block->add("relu", std::make_unique<LeakyReLU>(0.0f));
    block->add("conv2", b.conv(nf, nf, 3));
    body->add(std::to_string(i), std::make_unique<Residual>(std::move(block),
                                                            static_cast<float>(s.edsr_residual_scale)));
  }
  body->add("conv", b.conv(nf, nf, 3));
  seq->add("body", std::make_unique<Residual>(std::move(body), 1.0f));
  if (s.learned_upsampler()) {
    auto up = std::make_unique<Sequential>();
    for (int i = 0; i < log2_int(s.scale); ++i) {
      up->add("conv" + std::to_string(i + 1), b.conv(nf, 4 * nf, 3));
      up->add("shuffle" + std::to_string(i + 1), std::make_unique<PixelShuffle>(2));
    }
    seq->add("upsampler", std::move(up));
  }
  seq->add("tail", b.conv(nf, 1, 3));
  return seq;
}

LayerPtr build_esrgan(const NetworkSpec& s, Builder& b) {
  const int nf = s.features;
  auto seq = std::make_unique<Sequential>();
  if (b.volumetric && s.scale > 1) {
    seq->add("upsample", std::make_unique<UpsampleLinear>(Triple{s.scale, s.scale, s.scale}));
  }
  seq->add("conv_first", b.conv(s.in_slices, nf, 3));
  auto trunk = std::make_unique<Sequential>();
  for (int i = 0; i < s.esrgan_rrdb_blocks; ++i) {
    auto rrdb = std::make_unique<Sequential>();
    for (int r = 0; r < 3; ++r) {
      rrdb->add("rdb" + std::to_string(r + 1),
                std::make_unique<DenseBlock>(nf, s.esrgan_growth, b.cube(3), b.rng, b.gain));
    }
    trunk->add("rrdb" + std::to_string(i), std::make_unique<Residual>(std::move(rrdb), 0.2f));
  }
  trunk->add("trunk_conv", b.conv(nf, nf, 3));
  seq->add("trunk", std::make_unique<Residual>(std::move(trunk), 1.0f));
  if (s.learned_upsampler()) {
    for (int i = 0; i < log2_int(s.scale); ++i) {
      const std::string id = std::to_string(i + 1);
      seq->add("upsample" + id, std::make_unique<UpsampleNearest>(Triple{1, 2, 2}));
      seq->add("upconv" + id, b.conv(nf, nf, 3));
      seq->add("lrelu_up" + id, std::make_unique<LeakyReLU>(0.2f));
    }
  }
  seq->add("hr_conv", b.conv(nf, nf, 3));
  seq->add("lrelu_hr", std::make_unique<LeakyReLU>(0.2f));
  seq->add("conv_last", b.conv(nf, 1, 3));
  return seq;
}

}  // namespace

std::unique_ptr<Network> build_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Builder b{std::mt19937_64(seed)};
  b.volumetric = spec.dimensionality == Dimensionality::D3;
  LayerPtr root;
  switch (spec.family) {
    case Family::SRCNN:
      root = build_srcnn(spec, b);
      break;
    case Family::EDSR:
      root = build_edsr(spec, b);
      break;
    case Family::ESRGAN:
      b.gain = 0.1f;
      root = build_esrgan(spec, b);
      break;
  }
  if (!root) throw ValidationError("unsupported network family/dimensionality combination");
  return std::make_unique<Network>(spec, std::move(root));
}

void Network::check_input(const Shape& s) const {
  const bool ok = spec_.dimensionality == Dimensionality::D3 ? (s.c == 1)
                                                              : (s.c == spec_.in_slices && s.d == 1);
  if (!ok || s.n < 1 || s.h < 1 || s.w < 1 || s.d < 1) {
    const std::string expected = spec_.dimensionality == Dimensionality::D3
                                     ? "(N, 1, D, H, W)"
                                     : "(N, " + std::to_string(spec_.in_slices) + ", 1, H, W)";
    throw ValidationError("input shape mismatch for " + to_string(spec_.family) + " " +
                          to_string(spec_.dimensionality) + ": expected " + expected + ", got " +
                          s.str());
  }
}

Tensor Network::forward(const Tensor& x) {
  check_input(x.shape());
  return root_->forward(x);
}

Tensor Network::backward(const Tensor& grad_out) { return root_->backward(grad_out); }

void Network::zero_grad() {
  root_->visit_params("", [](const std::string&, Param& p) { p.grad.fill(0.0f); });
}

ActivationTrace Network::trace(const Shape& input) const {
  check_input(input);
  ActivationTrace acts;
  acts.emplace_back("input", input.numel());
  root_->trace(input, "", acts);
  return acts;
}

// ---------------------------------------------------------------- discriminator

std::unique_ptr<Discriminator> build_discriminator(const NetworkSpec& spec, int input_size,
                                                   int base_features, std::uint64_t seed) {
  require(input_size >= 32 && input_size % 32 == 0,
          "discriminator input size must be a positive multiple of 32");
  require(base_features >= 1, "discriminator base features must be positive");
  const bool vol = spec.dimensionality == Dimensionality::D3;
  std::mt19937_64 rng(seed);
  auto k3 = [&](int cin, int cout, bool bias) {
    auto c = vol ? Conv::same(cin, cout, Triple{3, 3, 3}, bias) : Conv::same(cin, cout, Triple{1, 3, 3}, bias);
    c->init_fan_in(rng);
    return c;
  };
  auto k4s2 = [&](int cin, int cout) {
    auto c = vol ? std::make_unique<Conv>(cin, cout, Triple{4, 4, 4}, Triple{2, 2, 2}, Triple{1, 1, 1}, false)
                 : std::make_unique<Conv>(cin, cout, Triple{1, 4, 4}, Triple{1, 2, 2}, Triple{0, 1, 1}, false);
    c->init_fan_in(rng);
    return c;
  };
  const int nf = base_features;
  auto seq = std::make_unique<Sequential>();
  seq->add("conv0_0", k3(1, nf, true));
  seq->add("lrelu0_0", std::make_unique<LeakyReLU>(0.2f));
  seq->add("conv0_1", k4s2(nf, nf));
  seq->add("bn0_1", std::make_unique<BatchNorm>(nf));
  seq->add("lrelu0_1", std::make_unique<LeakyReLU>(0.2f));
  const int widths[5] = {nf, 2 * nf, 4 * nf, 8 * nf, 8 * nf};
  for (int stage = 1; stage < 5; ++stage) {
    const std::string id = std::to_string(stage);
    seq->add("conv" + id + "_0", k3(widths[stage - 1], widths[stage], false));
    seq->add("bn" + id + "_0", std::make_unique<BatchNorm>(widths[stage]));
    seq->add("lrelu" + id + "_0", std::make_unique<LeakyReLU>(0.2f));
    seq->add("conv" + id + "_1", k4s2(widths[stage], widths[stage]));
    seq->add("bn" + id + "_1", std::make_unique<BatchNorm>(widths[stage]));
    seq->add("lrelu" + id + "_1", std::make_unique<LeakyReLU>(0.2f));
  }
  const int reduced = input_size / 32;
  const int flat = widths[4] * reduced * reduced * (vol ? reduced : 1);
  auto l1 = std::make_unique<Linear>(flat, 100);
  l1->init_fan_in(rng);
  auto l2 = std::make_unique<Linear>(100, 1);
  l2->init_fan_in(rng);
  seq->add("linear1", std::move(l1));
  seq->add("lrelu_l1", std::make_unique<LeakyReLU>(0.2f));
  seq->add("linear2", std::move(l2));
  return std::make_unique<Discriminator>(vol, input_size, std::move(seq));
}

Tensor Discriminator::forward(const Tensor& x) {
  const Shape s = x.shape();
  const bool ok = s.c == 1 && s.h == input_size_ && s.w == input_size_ &&
                  (volumetric_ ? s.d == input_size_ : s.d == 1);
  if (!ok) {
    const std::string sz = std::to_string(input_size_);
    throw ValidationError("discriminator expects (N, 1, " + (volumetric_ ? sz : std::string("1")) +
                          ", " + sz + ", " + sz + "), got " + s.str());
  }
  return root_->forward(x);
}

void Discriminator::zero_grad() {
  root_->visit_params("", [](const std::string&, Param& p) { p.grad.fill(0.0f); });
}

// ---------------------------------------------------------------- accounting

namespace {

ParamReport report_from(const std::function<void(const ParamVisitor&)>& visit) {
  ParamReport r;
  std::map<std::string, std::size_t> index;
  visit([&](const std::string& name, Param& p) {
    const auto dot = name.rfind('.');
    const std::string layer = dot == std::string::npos ? name : name.substr(0, dot);
    auto it = index.find(layer);
    if (it == index.end()) {
      index.emplace(layer, r.per_layer.size());
      r.per_layer.emplace_back(layer, 0);
      it = index.find(layer);
    }
    r.per_layer[it->second].second += static_cast<std::int64_t>(p.value.numel());
  });
  for (const auto& [name, count] : r.per_layer) r.total += count;
  return r;
}

}  // namespace

ParamReport count_parameters(Network& net) {
  ParamReport r = report_from([&](const ParamVisitor& fn) { net.visit_params(fn); });
  bool first = true;
  net.visit_params([&](const std::string&, Param& p) {
    if (!first) return;
    first = false;
    // weight shape: (k, in planes, depth, m, n)
    const Shape w = p.value.shape();
    r.kernel_m = w.h;
    r.kernel_n = w.w;
    r.first_layer_features_k = w.n;
    const std::int64_t planar = std::int64_t(w.n) * w.h * w.w;
    r.first_layer_delta_vs_2d = static_cast<std::int64_t>(p.value.numel()) - planar;
  });
  return r;
}

ParamReport count_parameters(Discriminator& disc) {
  return report_from([&](const ParamVisitor& fn) { disc.visit_params(fn); });
}

std::int64_t first_layer_parameter_delta(const NetworkSpec& spec_2d, const NetworkSpec& spec_25d) {
  spec_2d.validate();
  spec_25d.validate();
  require(spec_2d.dimensionality == Dimensionality::D2, "first spec must be 2D");
  require(spec_25d.dimensionality == Dimensionality::D25, "second spec must be 2.5D");
  NetworkSpec aligned = spec_25d;
  aligned.dimensionality = Dimensionality::D2;
  aligned.in_slices = 1;
  require(aligned == spec_2d, "specs differ beyond the slice window (family or configuration mismatch)");
  const std::int64_t m = spec_2d.first_kernel();
  const std::int64_t n = m;
  const std::int64_t k = spec_2d.first_features();
  return (spec_25d.in_slices - 1) * m * n * k;
}

std::vector<std::pair<std::string, Param*>> named_params(Network& net) {
  std::vector<std::pair<std::string, Param*>> out;
  net.visit_params([&](const std::string& name, Param& p) { out.emplace_back(name, &p); });
  return out;
}

}  // namespace xctsr
