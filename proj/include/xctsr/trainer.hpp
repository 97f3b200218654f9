#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xctsr/error.hpp"
#include "xctsr/layers.hpp"
#include "xctsr/losses.hpp"
#include "xctsr/network.hpp"
#include "xctsr/phantom.hpp"

namespace xctsr {

struct LossWeights {
  double pixel = 1.0;
  double perceptual = 0.0;
  double adversarial = 0.0;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int batch_size = 16;
  int steps = 1000;
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  AdamConfig optimizer;
  // 0 = only the final checkpoint.
  int checkpoint_every = 0;
  double validation_fraction = 0.1;
  // Validation is evaluated on at most this many held-back windows.
  int max_validation_patches = 64;
  // Validation PSNR is computed every this many steps (and at the last step).
  int validate_every = 100;
  PixelLossKind pixel_loss = PixelLossKind::L1;
  int hr_patch = 128;
  int patch_stride = 64;
  // Fraction of steps trained with the pixel loss only (adversarial setups).
  double warm_start_fraction = 0.2;
  int discriminator_features = 64;
  FeatureExtractorSpec extractor;

  // Family defaults: L2 pixel loss for SRCNN, L1 elsewhere; ESRGAN loss
  // weights (1e-2, 1.0, 5e-3).
  static TrainConfig defaults_for(Family f);
  void validate(const NetworkSpec& spec) const;
};

nlohmann::json to_json(const TrainConfig& c);
// Strict: starts from defaults_for(family) and rejects unknown keys.
TrainConfig train_config_from_json(const nlohmann::json& j, Family family);

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig cfg);
  void step();
  long steps_taken() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

struct LossRecord {
  int step = 0;
  double pixel = 0.0;
  double perceptual = 0.0;
  double adversarial_g = 0.0;
  double adversarial_d = 0.0;
  double total = 0.0;
  std::optional<double> validation_psnr;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path history_csv;
  std::vector<LossRecord> history;
  std::size_t train_windows = 0;
  std::size_t validation_windows = 0;
};

// Raised when a loss becomes non-finite; names the last good checkpoint.
class TrainingDiverged : public RuntimeFailure {
 public:
  TrainingDiverged(const std::string& msg, std::filesystem::path last_good)
      : RuntimeFailure(msg), last_good_checkpoint(std::move(last_good)) {}
  std::filesystem::path last_good_checkpoint;
};

// Trains a freshly initialised network on the manifest's "train" split and
// writes <out_dir>/checkpoint.ckpt and <out_dir>/loss_history.csv. Intermediate
// checkpoints overwrite the same file, so it always holds the last good state.
TrainResult train(const NetworkSpec& spec, const Manifest& manifest, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir);

void write_loss_history(const std::vector<LossRecord>& history, const std::filesystem::path& path);

}  // namespace xctsr
