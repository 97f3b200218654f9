#include "experiment.hpp"

#include <cstdio>
#include <fstream>

#include "xctsr/checkpoint.hpp"
#include "xctsr/error.hpp"
#include "xctsr/json_fields.hpp"

namespace xctsr::cli {

using nlohmann::json;

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  degradation.seed = derive_seed(s, "degrade");
  train.seed = derive_seed(s, "train");
}

json to_json(const EvaluationSettings& e) {
  json axes = json::array();
  for (SliceAxis a : e.axes) axes.push_back(to_string(a));
  return {{"threshold", to_string(e.threshold)},
          {"mask_margin_vox", e.mask_margin_vox},
          {"bin_edges_um", e.bin_edges_um},
          {"axes", axes},
          {"data_range", e.data_range}};
}

EvaluationSettings evaluation_from_json(const json& j) {
  const std::string sec = "evaluation";
  check_keys(j, {"threshold", "mask_margin_vox", "bin_edges_um", "axes", "data_range"}, sec);
  EvaluationSettings e;
  if (j.contains("threshold")) {
    const auto& t = j.at("threshold");
    if (t.is_number()) {
      e.threshold = Threshold{ThresholdKind::Fixed, t.get<double>()};
    } else if (t.is_string()) {
      e.threshold = parse_threshold(t.get<std::string>());
    } else {
      throw ValidationError(sec + ".threshold: expected a number, \"midpoint\" or \"otsu\"");
    }
  }
  read_field(j, "mask_margin_vox", e.mask_margin_vox, sec);
  read_field(j, "bin_edges_um", e.bin_edges_um, sec);
  read_field(j, "data_range", e.data_range, sec);
  if (j.contains("axes")) {
    std::vector<std::string> names;
    read_field(j, "axes", names, sec);
    e.axes.clear();
    for (const auto& n : names) e.axes.push_back(parse_slice_axis(n));
  }
  require(e.mask_margin_vox >= 0, sec + ".mask_margin_vox: must be >= 0");
  require(e.data_range > 0, sec + ".data_range: must be > 0");
  require(!e.axes.empty(), sec + ".axes: at least one axis is required");
  if (!e.bin_edges_um.empty()) {
    require(e.bin_edges_um.size() >= 2, sec + ".bin_edges_um: needs at least two edges");
    for (std::size_t i = 1; i < e.bin_edges_um.size(); ++i) {
      require(e.bin_edges_um[i] > e.bin_edges_um[i - 1], sec + ".bin_edges_um: edges must increase");
    }
  }
  return e;
}

ExperimentConfig experiment_from_json(const json& j) {
  check_keys(j, {"seed", "output_dir", "phantom", "degradation", "dataset", "network", "train", "tiles", "evaluation"},
             "config");
  ExperimentConfig c;
  std::uint64_t seed = 0;
  read_field(j, "seed", seed, "config");
  if (j.contains("output_dir")) {
    std::string out;
    read_field(j, "output_dir", out, "config");
    c.output_dir = out;
  }
  if (j.contains("phantom")) c.phantom = phantom_template_from_json(j.at("phantom"));
  if (j.contains("degradation")) c.degradation = degradation_from_json(j.at("degradation"));
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"train_parts", "test_parts"}, "dataset");
    read_field(d, "train_parts", c.dataset.train_parts, "dataset");
    read_field(d, "test_parts", c.dataset.test_parts, "dataset");
    require(c.dataset.train_parts >= 0 && c.dataset.test_parts >= 0, "dataset: part counts must be >= 0");
  }
  if (j.contains("network")) c.network = network_spec_from_json(j.at("network"));
  c.network.validate();
  c.train = j.contains("train") ? train_config_from_json(j.at("train"), c.network.family)
                                : TrainConfig::defaults_for(c.network.family);
  c.train.validate(c.network);
  if (j.contains("tiles")) c.tiles = tile_spec_from_json(j.at("tiles"));
  if (j.contains("evaluation")) c.evaluation = evaluation_from_json(j.at("evaluation"));
  c.degradation.validate();
  c.set_seed(seed);
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed config " + path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

json to_json(const ExperimentConfig& c) {
  return {{"seed", c.seed},
          {"output_dir", c.output_dir.string()},
          {"phantom", xctsr::to_json(c.phantom)},
          {"degradation", xctsr::to_json(c.degradation)},
          {"dataset", {{"train_parts", c.dataset.train_parts}, {"test_parts", c.dataset.test_parts}}},
          {"network", xctsr::to_json(c.network)},
          {"train", xctsr::to_json(c.train)},
          {"tiles", xctsr::to_json(c.tiles)},
          {"evaluation", to_json(c.evaluation)}};
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace xctsr::cli
