#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xctsr/defecteval.hpp"
#include "xctsr/network.hpp"
#include "xctsr/phantom.hpp"
#include "xctsr/slidewin.hpp"
#include "xctsr/trainer.hpp"

namespace xctsr::cli {

inline constexpr const char* kVersion = "0.1.0";

struct DatasetConfig {
  int train_parts = 2;
  int test_parts = 1;
};

// One experiment: every section is optional and falls back to its defaults.
// Sub-seeds (phantom, degradation, training) are always derived from `seed`.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  PhantomTemplate phantom;
  DegradationSpec degradation;
  DatasetConfig dataset;
  NetworkSpec network = NetworkSpec::standard(Family::SRCNN, Dimensionality::D25);
  TrainConfig train = TrainConfig::defaults_for(Family::SRCNN);
  TileSpec tiles;
  EvaluationSettings evaluation;

  // Re-derives the sub-seeds after the master seed changes.
  void set_seed(std::uint64_t s);
};

// Strict: unknown keys anywhere are rejected with a field-level message.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& c);

nlohmann::json to_json(const EvaluationSettings& e);
EvaluationSettings evaluation_from_json(const nlohmann::json& j);

// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& s);

}  // namespace xctsr::cli
