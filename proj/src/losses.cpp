#include "xctsr/losses.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

#include "xctsr/error.hpp"

namespace xctsr {

PixelLossKind parse_pixel_loss(const std::string& s) {
  if (s == "l1" || s == "L1") return PixelLossKind::L1;
  if (s == "l2" || s == "L2") return PixelLossKind::L2;
  throw ValidationError("unknown pixel loss '" + s + "' (expected l1, l2)");
}

std::string to_string(PixelLossKind k) { return k == PixelLossKind::L1 ? "l1" : "l2"; }

double pixel_loss(const Tensor& pred, const Tensor& target, PixelLossKind kind) {
  return pixel_loss_grad(pred, target, kind, nullptr);
}

double pixel_loss_grad(const Tensor& pred, const Tensor& target, PixelLossKind kind, Tensor* grad) {
  require(pred.shape() == target.shape(),
          "pixel loss shape mismatch: " + pred.shape().str() + " vs " + target.shape().str());
  require(pred.numel() > 0, "pixel loss on empty tensors");
  const std::size_t n = pred.numel();
  const float* p = pred.data();
  const float* t = target.data();
  if (grad) *grad = Tensor(pred.shape());
  float* g = grad ? grad->data() : nullptr;
  const double inv = 1.0 / double(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = double(p[i]) - double(t[i]);
    if (kind == PixelLossKind::L1) {
      acc += std::abs(d);
      if (g) g[i] = static_cast<float>(d > 0 ? inv : d < 0 ? -inv : 0.0);
    } else {
      acc += d * d;
      if (g) g[i] = static_cast<float>(2.0 * d * inv);
    }
  }
  return acc * inv;
}

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

}  // namespace

RaganGradients ragan_gradients(std::span<const double> real, std::span<const double> fake) {
  require(!real.empty() && !fake.empty(), "relativistic losses need non-empty real and fake logits");
  const double mr = mean(real), mf = mean(fake);
  const double R = double(real.size()), F = double(fake.size());
  RaganGradients out;
  // -log s(a) = softplus(-a); -log(1 - s(a)) = softplus(a)
  double d = 0, g = 0;
  std::vector<double> a(real.size()), b(fake.size());
  for (std::size_t i = 0; i < real.size(); ++i) {
    a[i] = real[i] - mf;
    d += softplus(-a[i]) / R;
    g += softplus(a[i]) / R;
  }
  for (std::size_t j = 0; j < fake.size(); ++j) {
    b[j] = fake[j] - mr;
    d += softplus(b[j]) / F;
    g += softplus(-b[j]) / F;
  }
  out.losses = {d, g};

  // L = (1/R) sum phi(a_i) + (1/F) sum psi(b_j), a_i = r_i - mean(f), b_j = f_j - mean(r)
  auto grads = [&](auto phi_prime, auto psi_prime, std::vector<double>& wr, std::vector<double>& wf) {
    double sum_phi = 0, sum_psi = 0;
    std::vector<double> pa(a.size()), pb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) sum_phi += pa[i] = phi_prime(a[i]);
    for (std::size_t j = 0; j < b.size(); ++j) sum_psi += pb[j] = psi_prime(b[j]);
    wr.resize(a.size());
    wf.resize(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) wr[i] = pa[i] / R - sum_psi / (F * R);
    for (std::size_t j = 0; j < b.size(); ++j) wf[j] = pb[j] / F - sum_phi / (R * F);
  };
  grads([](double x) { return -sigmoid(-x); }, [](double x) { return sigmoid(x); }, out.d_wrt_real,
        out.d_wrt_fake);
  grads([](double x) { return sigmoid(x); }, [](double x) { return -sigmoid(-x); }, out.g_wrt_real,
        out.g_wrt_fake);
  return out;
}

RaganLosses ragan_losses(std::span<const double> real, std::span<const double> fake) {
  return ragan_gradients(real, fake).losses;
}

// ---------------------------------------------------------------- perceptual

ExtractorKind parse_extractor_kind(const std::string& s) {
  if (s == "fixed_random_conv") return ExtractorKind::FixedRandomConv;
  if (s == "external_pretrained") return ExtractorKind::ExternalPretrained;
  if (s == "identity") return ExtractorKind::Identity;
  throw ValidationError("unknown feature extractor '" + s +
                        "' (expected fixed_random_conv, external_pretrained, identity)");
}

std::string to_string(ExtractorKind k) {
  switch (k) {
    case ExtractorKind::FixedRandomConv: return "fixed_random_conv";
    case ExtractorKind::ExternalPretrained: return "external_pretrained";
    case ExtractorKind::Identity: return "identity";
  }
  return "?";
}

namespace {

constexpr char kExtractorMagic[8] = {'X', 'C', 'T', 'S', 'R', 'F', 'X', '1'};

void load_external(Sequential& stack, const std::filesystem::path& path, int tap) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RuntimeFailure("cannot open extractor weights " + path.string());
  char magic[8];
  is.read(magic, 8);
  require(is && std::memcmp(magic, kExtractorMagic, 8) == 0, path.string() + " is not an extractor archive");
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  const auto header = nlohmann::json::parse(text);
  const auto& layers = header.at("layers");
  require(tap >= 1 && tap <= int(layers.size()), "tap_point outside the external extractor's layers");
  for (int i = 0; i < tap; ++i) {
    const int cin = layers[i].at("in"), cout = layers[i].at("out"), k = layers[i].at("kernel");
    auto conv = Conv::same(cin, cout, Triple{1, k, k});
    is.read(reinterpret_cast<char*>(conv->weight().value.data()),
            static_cast<std::streamsize>(conv->weight().value.numel() * sizeof(float)));
    is.read(reinterpret_cast<char*>(conv->bias().value.data()),
            static_cast<std::streamsize>(conv->bias().value.numel() * sizeof(float)));
    require(bool(is), "extractor archive truncated at layer " + std::to_string(i));
    if (i > 0) stack.add("act" + std::to_string(i), std::make_unique<LeakyReLU>(0.2f));
    stack.add("conv" + std::to_string(i + 1), std::move(conv));
  }
}

}  // namespace

void save_extractor_weights(const std::filesystem::path& path, const std::vector<std::array<int, 3>>& layers,
                            std::span<const float> values) {
  nlohmann::json header;
  header["layers"] = nlohmann::json::array();
  std::size_t expected = 0;
  for (const auto& l : layers) {
    header["layers"].push_back({{"in", l[0]}, {"out", l[1]}, {"kernel", l[2]}});
    expected += std::size_t(l[1]) * l[0] * l[2] * l[2] + l[1];
  }
  require(values.size() == expected, "extractor weight count does not match the layer table");
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os.write(kExtractorMagic, 8);
  const std::uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(text.data(), static_cast<std::streamsize>(len));
  os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

FeatureExtractor::FeatureExtractor(const FeatureExtractorSpec& spec) : spec_(spec) {
  switch (spec.kind) {
    case ExtractorKind::Identity:
      break;
    case ExtractorKind::FixedRandomConv: {
      require(spec.tap_point >= 1 && spec.tap_point <= 4, "fixed_random_conv tap_point must be in 1..4");
      const int widths[5] = {1, 16, 32, 32, 64};
      std::mt19937_64 rng(spec.seed);
      for (int i = 0; i < spec.tap_point; ++i) {
        if (i > 0) stack_.add("act" + std::to_string(i), std::make_unique<LeakyReLU>(0.2f));
        auto conv = Conv::same(widths[i], widths[i + 1], Triple{1, 3, 3});
        conv->init_fan_in(rng, std::sqrt(3.0f));
        stack_.add("conv" + std::to_string(i + 1), std::move(conv));
      }
      break;
    }
    case ExtractorKind::ExternalPretrained:
      require(!spec.weights.empty(), "external_pretrained extractor needs a weights path");
      load_external(stack_, spec.weights, spec.tap_point);
      break;
  }
  stack_.set_training(true);
}

Tensor FeatureExtractor::features(const Tensor& x) {
  if (spec_.kind == ExtractorKind::Identity) return x;
  require(x.shape().c == 1, "feature extractor expects single-channel images");
  // (n, 1, d, h, w) -> per-slice 2D features via depth-1 kernels
  return stack_.forward(x);
}

Tensor FeatureExtractor::backward(const Tensor& grad_features) {
  if (spec_.kind == ExtractorKind::Identity) return grad_features;
  return stack_.backward(grad_features);
}

double perceptual_loss(const Tensor& pred, const Tensor& target, FeatureExtractor& extractor) {
  return perceptual_loss_grad(pred, target, extractor, nullptr);
}

double perceptual_loss_grad(const Tensor& pred, const Tensor& target, FeatureExtractor& extractor,
                            Tensor* grad) {
  require(extractor.frozen(), "perceptual loss requires a frozen feature extractor");
  require(pred.shape() == target.shape(),
          "perceptual loss shape mismatch: " + pred.shape().str() + " vs " + target.shape().str());
  const Tensor ft = extractor.features(target);
  const Tensor fp = extractor.features(pred);  // last call: backward refers to pred
  Tensor gf;
  const double value = pixel_loss_grad(fp, ft, PixelLossKind::L2, grad ? &gf : nullptr);
  if (grad) *grad = extractor.backward(gf);
  return value;
}

}  // namespace xctsr
