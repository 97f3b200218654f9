#include "xctsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "xctsr/checkpoint.hpp"
#include "xctsr/error.hpp"
#include "xctsr/json_fields.hpp"
#include "xctsr/patches.hpp"
#include "xctsr/slidewin.hpp"

namespace xctsr {

using nlohmann::json;

TrainConfig TrainConfig::defaults_for(Family f) {
  TrainConfig c;
  if (f == Family::SRCNN) c.pixel_loss = PixelLossKind::L2;
  if (f == Family::ESRGAN) c.loss_weights = {1e-2, 1.0, 5e-3};
  return c;
}

void TrainConfig::validate(const NetworkSpec& spec) const {
  require(batch_size >= 1, "train.batch_size must be >= 1");
  require(steps >= 0, "train.steps must be >= 0");
  require(checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
  require(validate_every >= 1, "train.validate_every must be >= 1");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0, "train.validation_fraction must be in [0, 1)");
  require(max_validation_patches >= 0, "train.max_validation_patches must be >= 0");
  require(optimizer.learning_rate > 0, "train.learning_rate must be > 0");
  require(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1,
          "train betas must lie in [0, 1)");
  require(optimizer.epsilon > 0, "train.epsilon must be > 0");
  require(loss_weights.pixel >= 0 && loss_weights.perceptual >= 0 && loss_weights.adversarial >= 0,
          "train.loss_weights must be >= 0");
  require(warm_start_fraction >= 0 && warm_start_fraction <= 1, "train.warm_start_fraction must be in [0, 1]");
  require(hr_patch >= 1 && patch_stride >= 1, "train.hr_patch and train.patch_stride must be positive");
  if (spec.family != Family::ESRGAN) {
    require(loss_weights.perceptual == 0 && loss_weights.adversarial == 0,
            "train.loss_weights: perceptual and adversarial weights must be 0 for " + to_string(spec.family));
  }
  if (loss_weights.adversarial > 0) {
    require(hr_patch % 32 == 0, "train.hr_patch must be a multiple of 32 for the discriminator");
  }
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"steps", c.steps},
          {"seed", c.seed},
          {"loss_weights", {c.loss_weights.pixel, c.loss_weights.perceptual, c.loss_weights.adversarial}},
          {"learning_rate", c.optimizer.learning_rate},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"epsilon", c.optimizer.epsilon},
          {"checkpoint_every", c.checkpoint_every},
          {"validation_fraction", c.validation_fraction},
          {"max_validation_patches", c.max_validation_patches},
          {"validate_every", c.validate_every},
          {"pixel_loss", to_string(c.pixel_loss)},
          {"hr_patch", c.hr_patch},
          {"patch_stride", c.patch_stride},
          {"warm_start_fraction", c.warm_start_fraction},
          {"discriminator_features", c.discriminator_features},
          {"extractor",
           {{"kind", to_string(c.extractor.kind)},
            {"tap_point", c.extractor.tap_point},
            {"seed", c.extractor.seed},
            {"weights", c.extractor.weights.string()}}}};
}

TrainConfig train_config_from_json(const json& j, Family family) {
  const std::string sec = "train";
  check_keys(j,
             {"batch_size", "steps", "seed", "loss_weights", "learning_rate", "beta1", "beta2", "epsilon",
              "checkpoint_every", "validation_fraction", "max_validation_patches", "validate_every",
              "pixel_loss", "hr_patch", "patch_stride", "warm_start_fraction", "discriminator_features",
              "extractor"},
             sec);
  TrainConfig c = TrainConfig::defaults_for(family);
  read_field(j, "batch_size", c.batch_size, sec);
  read_field(j, "steps", c.steps, sec);
  read_field(j, "seed", c.seed, sec);
  if (j.contains("loss_weights")) {
    std::array<double, 3> w{};
    read_field(j, "loss_weights", w, sec);
    c.loss_weights = {w[0], w[1], w[2]};
  }
  read_field(j, "learning_rate", c.optimizer.learning_rate, sec);
  read_field(j, "beta1", c.optimizer.beta1, sec);
  read_field(j, "beta2", c.optimizer.beta2, sec);
  read_field(j, "epsilon", c.optimizer.epsilon, sec);
  read_field(j, "checkpoint_every", c.checkpoint_every, sec);
  read_field(j, "validation_fraction", c.validation_fraction, sec);
  read_field(j, "max_validation_patches", c.max_validation_patches, sec);
  read_field(j, "validate_every", c.validate_every, sec);
  if (j.contains("pixel_loss")) c.pixel_loss = parse_pixel_loss(j.at("pixel_loss").get<std::string>());
  read_field(j, "hr_patch", c.hr_patch, sec);
  read_field(j, "patch_stride", c.patch_stride, sec);
  read_field(j, "warm_start_fraction", c.warm_start_fraction, sec);
  read_field(j, "discriminator_features", c.discriminator_features, sec);
  if (j.contains("extractor")) {
    const json& e = j.at("extractor");
    check_keys(e, {"kind", "tap_point", "seed", "weights"}, "train.extractor");
    if (e.contains("kind")) c.extractor.kind = parse_extractor_kind(e.at("kind").get<std::string>());
    read_field(e, "tap_point", c.extractor.tap_point, "train.extractor");
    read_field(e, "seed", c.extractor.seed, "train.extractor");
    std::string w;
    read_field(e, "weights", w, "train.extractor");
    c.extractor.weights = w;
  }
  return c;
}

// ---------------------------------------------------------------- Adam

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (Param* p : params_) {
    m_.emplace_back(p->value.numel(), 0.0f);
    v_.emplace_back(p->value.numel(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  const float b1 = float(cfg_.beta1), b2 = float(cfg_.beta2);
  const float step = float(cfg_.learning_rate / bc1);
  const float inv_sqrt_bc2 = float(1.0 / std::sqrt(bc2));
  const float eps = float(cfg_.epsilon);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    float* w = params_[k]->value.data();
    const float* g = params_[k]->grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    const std::size_t n = m_[k].size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

// ---------------------------------------------------------------- training

void write_loss_history(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os << "step,pixel,perceptual,adversarial_g,adversarial_d,total,validation_psnr\n";
  os << std::setprecision(9);
  for (const auto& r : history) {
    os << r.step << ',' << r.pixel << ',' << r.perceptual << ',' << r.adversarial_g << ',' << r.adversarial_d
       << ',' << r.total << ',';
    if (r.validation_psnr) os << *r.validation_psnr;
    os << '\n';
  }
}

namespace {

struct Part {
  Grid input;   // network-input grid
  Grid target;  // high-resolution grid
};

struct WindowRef {
  int part = 0;
  std::array<int, 3> origin{};
};

class PatchSource {
 public:
  PatchSource(const NetworkSpec& spec, const Manifest& manifest, const TrainConfig& cfg) : spec_(spec) {
    wcfg_.mode = spec.dimensionality;
    wcfg_.hr_patch = cfg.hr_patch;
    wcfg_.stride = cfg.patch_stride;
    wcfg_.pre_upsampled = spec.pre_upsampled();
    wcfg_.in_slices = spec.in_slices;
    wcfg_.scale = spec.scale;
    const auto entries = manifest.split("train");
    require(!entries.empty(), "manifest has no training parts");
    for (const ManifestEntry* e : entries) {
      const Volume lr = load_volume(manifest.root / e->lr);
      const Volume hr = load_volume(manifest.root / e->hr);
      Part p{prepare_network_input(lr, spec).grid, hr.grid};
      if (spec.dimensionality == Dimensionality::D25) {
        // Replicate-pad both grids as inference does, so every original slice
        // (the first and last ones included) is a window centre. Padded target
        // slices are never centres.
        const int half = spec.in_slices / 2;
        p.input = pad_volume_z(Volume(std::move(p.input), lr.voxel_size), half).grid;
        p.target = pad_volume_z(Volume(std::move(p.target), hr.voxel_size), half).grid;
      }
      const int idx = int(parts_.size());
      for (const auto& o : enumerate_window_origins(p.input.dims, p.target.dims, wcfg_)) refs_.push_back({idx, o});
      parts_.push_back(std::move(p));
    }
    require(!refs_.empty(), "no training windows fit: hr_patch " + std::to_string(cfg.hr_patch) +
                                " is larger than the training volumes");
  }

  const std::vector<WindowRef>& refs() const { return refs_; }

  // (input, target) tensors for a list of windows.
  std::pair<Tensor, Tensor> batch(std::span<const WindowRef> items) const {
    std::vector<Tensor> xs, ys;
    for (const WindowRef& r : items) {
      const Part& p = parts_[r.part];
      const PatchPair pp = make_patch(p.input, p.target, r.origin, wcfg_);
      const auto& di = pp.input_window.dims;
      const auto& dt = pp.target.dims;
      Tensor x(spec_.dimensionality == Dimensionality::D3 ? Shape{1, 1, di[0], di[1], di[2]}
                                                          : Shape{1, di[0], 1, di[1], di[2]});
      Tensor y(Shape{1, 1, dt[0], dt[1], dt[2]});
      std::copy(pp.input_window.data.begin(), pp.input_window.data.end(), x.data());
      std::copy(pp.target.data.begin(), pp.target.data.end(), y.data());
      xs.push_back(std::move(x));
      ys.push_back(std::move(y));
    }
    return {stack_batch(xs), stack_batch(ys)};
  }

 private:
  NetworkSpec spec_;
  WindowConfig wcfg_;
  std::vector<Part> parts_;
  std::vector<WindowRef> refs_;
};

std::vector<double> logits_of(const Tensor& t) { return {t.data(), t.data() + t.numel()}; }

Tensor logit_grad(const std::vector<double>& g, const Shape& s, double weight) {
  Tensor t(s);
  for (std::size_t i = 0; i < g.size(); ++i) t.data()[i] = float(g[i] * weight);
  return t;
}

double batch_psnr(const Tensor& pred, const Tensor& target) {
  const std::size_t per = pred.shape().per_sample();
  double acc = 0;
  for (int i = 0; i < pred.shape().n; ++i) {
    double mse = 0;
    const float* a = pred.sample(i);
    const float* b = target.sample(i);
    for (std::size_t k = 0; k < per; ++k) mse += (double(a[k]) - b[k]) * (double(a[k]) - b[k]);
    mse /= double(per);
    acc += 10.0 * std::log10(1.0 / std::max(mse, 1e-20));
  }
  return acc;
}

std::vector<Param*> params_of(const std::function<void(const ParamVisitor&)>& visit) {
  std::vector<Param*> out;
  visit([&](const std::string&, Param& p) { out.push_back(&p); });
  return out;
}

}  // namespace

TrainResult train(const NetworkSpec& spec, const Manifest& manifest, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir) {
  spec.validate();
  cfg.validate(spec);
  std::filesystem::create_directories(out_dir);

  PatchSource source(spec, manifest, cfg);
  std::vector<WindowRef> refs = source.refs();
  std::mt19937_64 split_rng(derive_seed(cfg.seed, "split"));
  std::shuffle(refs.begin(), refs.end(), split_rng);
  std::size_t n_val = std::size_t(std::floor(cfg.validation_fraction * double(refs.size())));
  n_val = std::min<std::size_t>(n_val, std::size_t(cfg.max_validation_patches));
  if (n_val >= refs.size()) n_val = refs.size() - 1;
  const std::vector<WindowRef> val(refs.begin(), refs.begin() + long(n_val));
  std::vector<WindowRef> pool(refs.begin() + long(n_val), refs.end());

  auto net = build_network(spec, derive_seed(cfg.seed, "init"));
  Adam opt_g(params_of([&](const ParamVisitor& f) { net->visit_params(f); }), cfg.optimizer);

  const bool adversarial = cfg.loss_weights.adversarial > 0;
  const bool perceptual = cfg.loss_weights.perceptual > 0;
  std::unique_ptr<Discriminator> disc;
  std::unique_ptr<Adam> opt_d;
  if (adversarial) {
    disc = build_discriminator(spec, cfg.hr_patch, cfg.discriminator_features, derive_seed(cfg.seed, "disc"));
    disc->set_training(true);
    opt_d = std::make_unique<Adam>(params_of([&](const ParamVisitor& f) { disc->visit_params(f); }),
                                   cfg.optimizer);
  }
  std::unique_ptr<FeatureExtractor> extractor;
  if (perceptual) extractor = std::make_unique<FeatureExtractor>(cfg.extractor);
  const int warm_steps = (adversarial || perceptual) ? int(std::ceil(cfg.warm_start_fraction * cfg.steps)) : 0;

  TrainResult result;
  result.checkpoint = out_dir / "checkpoint.ckpt";
  result.history_csv = out_dir / "loss_history.csv";
  result.train_windows = pool.size();
  result.validation_windows = val.size();

  auto checkpoint_meta = [&](int step) {
    return json{{"step", step}, {"train", to_json(cfg)}, {"manifest_root", manifest.root.string()}};
  };
  save_checkpoint(*net, result.checkpoint, checkpoint_meta(0));

  auto validate = [&]() -> std::optional<double> {
    if (val.empty()) return std::nullopt;
    net->set_training(false);
    double acc = 0;
    for (std::size_t i = 0; i < val.size(); i += std::size_t(cfg.batch_size)) {
      const std::size_t n = std::min(val.size() - i, std::size_t(cfg.batch_size));
      auto [x, y] = source.batch(std::span(val).subspan(i, n));
      acc += batch_psnr(net->forward(x), y);
    }
    net->set_training(true);
    return acc / double(val.size());
  };

  std::mt19937_64 order_rng(derive_seed(cfg.seed, "order"));
  std::size_t cursor = pool.size();
  net->set_training(true);
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<WindowRef> items;
    while (int(items.size()) < cfg.batch_size) {
      if (cursor == pool.size()) {
        std::shuffle(pool.begin(), pool.end(), order_rng);
        cursor = 0;
      }
      items.push_back(pool[cursor++]);
    }
    auto [x, y] = source.batch(items);

    LossRecord rec;
    rec.step = step;
    if (step % cfg.validate_every == 0 || step + 1 == cfg.steps) rec.validation_psnr = validate();

    net->zero_grad();
    const Tensor pred = net->forward(x);
    Tensor grad;
    rec.pixel = pixel_loss_grad(pred, y, cfg.pixel_loss, &grad);
    for (float& g : grad.values()) g *= float(cfg.loss_weights.pixel);
    rec.total = cfg.loss_weights.pixel * rec.pixel;

    const bool full = step >= warm_steps;
    if (perceptual && full) {
      Tensor gp;
      rec.perceptual = perceptual_loss_grad(pred, y, *extractor, &gp);
      add_inplace(grad, gp, float(cfg.loss_weights.perceptual));
      rec.total += cfg.loss_weights.perceptual * rec.perceptual;
    }
    if (adversarial && full) {
      const auto real = logits_of(disc->forward(y));
      const Tensor fake_t = disc->forward(pred);
      const auto fake = logits_of(fake_t);
      const RaganGradients rg = ragan_gradients(real, fake);
      rec.adversarial_g = rg.losses.g_loss;
      rec.adversarial_d = rg.losses.d_loss;
      rec.total += cfg.loss_weights.adversarial * rec.adversarial_g;
      // generator: gradient through the fake branch only (the real branch does
      // not depend on the generator)
      const Tensor gx = disc->backward(logit_grad(rg.g_wrt_fake, fake_t.shape(), cfg.loss_weights.adversarial));
      add_inplace(grad, gx);
    }

    if (!std::isfinite(rec.total) || !all_finite(grad)) {
      result.history.push_back(rec);
      write_loss_history(result.history, result.history_csv);
      throw TrainingDiverged("non-finite loss at step " + std::to_string(step) + "; last good checkpoint " +
                                 result.checkpoint.string(),
                             result.checkpoint);
    }
    net->backward(grad);
    opt_g.step();

    if (adversarial && full) {
      // discriminator step on the pre-update generator output
      disc->zero_grad();
      const Tensor real_t = disc->forward(y);
      const Tensor fake_t = disc->forward(pred);
      const RaganGradients rg = ragan_gradients(logits_of(real_t), logits_of(fake_t));
      disc->backward(logit_grad(rg.d_wrt_fake, fake_t.shape(), 1.0));
      disc->forward(y);
      disc->backward(logit_grad(rg.d_wrt_real, real_t.shape(), 1.0));
      opt_d->step();
    }
    result.history.push_back(rec);

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(*net, result.checkpoint, checkpoint_meta(step + 1));
      write_loss_history(result.history, result.history_csv);
    }
  }
  save_checkpoint(*net, result.checkpoint, checkpoint_meta(cfg.steps));
  write_loss_history(result.history, result.history_csv);
  return result;
}

}  // namespace xctsr
