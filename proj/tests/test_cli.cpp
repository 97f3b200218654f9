#include <doctest.h>

#include "experiment.hpp"
#include "xctsr/error.hpp"

using namespace xctsr;
using nlohmann::json;

TEST_CASE("experiment config defaults and seed derivation") {
  const auto c = cli::experiment_from_json(json::object());
  CHECK(c.network == NetworkSpec::standard(Family::SRCNN, Dimensionality::D25));
  CHECK(c.train.pixel_loss == PixelLossKind::L2);
  const auto a = cli::experiment_from_json({{"seed", 5}});
  const auto b = cli::experiment_from_json({{"seed", 5}, {"train", {{"seed", 123}}}});
  CHECK(a.train.seed == derive_seed(5, "train"));
  CHECK(b.train.seed == a.train.seed);
  CHECK(a.degradation.seed == derive_seed(5, "degrade"));
  CHECK(cli::experiment_from_json({{"seed", 6}}).train.seed != a.train.seed);
}

TEST_CASE("experiment config round trip and family-aware train defaults") {
  const json j = {{"seed", 3},
                  {"network", {{"family", "esrgan"}, {"dimensionality", "2.5d"}}},
                  {"train", {{"steps", 10}, {"hr_patch", 64}}},
                  {"evaluation", {{"threshold", 0.4}, {"axes", {"xz", "yz"}}}}};
  const auto c = cli::experiment_from_json(j);
  CHECK(c.train.loss_weights.adversarial == 5e-3);
  CHECK(c.evaluation.threshold.kind == ThresholdKind::Fixed);
  CHECK(c.evaluation.axes.size() == 2);
  const auto again = cli::experiment_from_json(cli::to_json(c));
  CHECK(cli::to_json(again) == cli::to_json(c));
}

TEST_CASE("experiment config rejects unknown keys with the field path") {
  auto message = [](const json& j) {
    try {
      cli::experiment_from_json(j);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  CHECK(message({{"outputs", "x"}}) == "config.outputs: unknown key");
  CHECK(message({{"dataset", {{"parts", 2}}}}) == "dataset.parts: unknown key");
  CHECK(message({{"evaluation", {{"axes", {"xw"}}}}}) != "accepted");
  CHECK(message({{"tiles", {{"tile_yx", {8, 8}}, {"overlap_yx", {4, 4}}}}}) != "accepted");
  CHECK(message({{"network", {{"family", "srcnn"}, {"dimensionality", "2d"}}}, {"train", {{"loss_weights", {1, 0, 0.1}}}}}) !=
        "accepted");
  CHECK(message({{"seed", "seven"}}).rfind("config.seed:", 0) == 0);
}

TEST_CASE("config hash is stable") {
  CHECK(cli::fnv1a_hex("") == "cbf29ce484222325");
  CHECK(cli::fnv1a_hex("a") == "af63dc4c8601ec8c");
}
