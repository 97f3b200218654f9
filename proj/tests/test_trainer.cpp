#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "xctsr/checkpoint.hpp"
#include "xctsr/error.hpp"
#include "xctsr/phantom.hpp"
#include "xctsr/trainer.hpp"

using namespace xctsr;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("xctsr_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Small phantom dataset: two training parts and one test part.
const Manifest& toy_dataset() {
  static const Manifest m = [] {
    PhantomTemplate t;
    t.dims = {16, 64, 64};
    t.part_shape = PartShape::Block;
    t.n_defects = 12;
    t.max_diameter_vox = 5;
    return make_dataset(2, 1, t, DegradationSpec{}, temp_dir("toy"), 9, true);
  }();
  return m;
}

// One part whose HR and LR volumes are constant, so the interpolated input
// equals the target everywhere.
Manifest trivial_dataset(int slices) {
  const auto dir = temp_dir("trivial");
  Volume hr(Grid({slices, 16, 16}, 0.5f), VoxelSize{1, 1, 1});
  Volume lr(Grid({slices, 4, 4}, 0.5f), VoxelSize{1, 4, 4});
  save_volume(hr, dir / "hr");
  save_volume(lr, dir / "lr");
  Manifest m;
  m.root = dir;
  ManifestEntry e;
  e.split = "train";
  e.hr = "hr.json";
  e.lr = "lr.json";
  e.defects = "none.json";
  m.entries.push_back(e);
  save_manifest(m, manifest_path(dir));
  return load_manifest(dir);
}

NetworkSpec small(Family f, Dimensionality d) {
  NetworkSpec s = NetworkSpec::standard(f, d);
  s.edsr_blocks = 2;
  s.features = 16;
  s.srcnn_mid_features = 8;
  s.esrgan_rrdb_blocks = 1;
  s.esrgan_growth = 8;
  return s;
}

TrainConfig quick(Family f, int steps) {
  TrainConfig c = TrainConfig::defaults_for(f);
  c.steps = steps;
  c.batch_size = 4;
  c.hr_patch = 16;
  c.patch_stride = 16;
  c.validate_every = 10;
  c.optimizer.learning_rate = 1e-3;
  return c;
}

bool same_weights(Network& a, Network& b) {
  auto pa = named_params(a), pb = named_params(b);
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].first != pb[i].first || max_abs_diff(pa[i].second->value, pb[i].second->value) != 0.0f) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("zero steps writes the initialisation") {
  const auto spec = small(Family::EDSR, Dimensionality::D2);
  TrainConfig c = quick(Family::EDSR, 0);
  c.seed = 4;
  const auto r = train(spec, toy_dataset(), c, temp_dir("zero"));
  CHECK(r.history.empty());
  auto loaded = load_checkpoint(r.checkpoint);
  auto init = build_network(spec, derive_seed(4, "init"));
  CHECK(same_weights(*loaded.net, *init));
  CHECK(loaded.meta.at("step") == 0);
}

TEST_CASE("SRCNN memorises identical trivial pairs") {
  const Manifest m = trivial_dataset(50);
  TrainConfig c = TrainConfig::defaults_for(Family::SRCNN);
  c.steps = 500;
  c.batch_size = 4;
  c.hr_patch = 16;
  c.patch_stride = 16;
  c.validation_fraction = 0;
  const auto r = train(NetworkSpec::standard(Family::SRCNN, Dimensionality::D2), m, c, temp_dir("memorise"));
  REQUIRE(r.train_windows == 50);
  CHECK(r.history.back().pixel < 1e-4);
}

TEST_CASE("training loss halves on the toy set for SRCNN and EDSR") {
  for (Family f : {Family::SRCNN, Family::EDSR}) {
    const auto r = train(small(f, Dimensionality::D2), toy_dataset(), quick(f, 150), temp_dir("halve"));
    CHECK(r.train_windows + r.validation_windows >= 200);
    double tail = 0;
    for (std::size_t i = r.history.size() - 10; i < r.history.size(); ++i) tail += r.history[i].total;
    tail /= 10;
    CHECK(tail <= 0.5 * r.history.front().total);
    CHECK(r.history.back().validation_psnr.has_value());
  }
}

TEST_CASE("same seed and manifest give an identical loss history") {
  const auto spec = small(Family::SRCNN, Dimensionality::D25);
  TrainConfig c = quick(Family::SRCNN, 12);
  const auto a = train(spec, toy_dataset(), c, temp_dir("det_a"));
  const auto b = train(spec, toy_dataset(), c, temp_dir("det_b"));
  // Every slice of both 16-slice training parts is a window centre.
  CHECK(a.train_windows + a.validation_windows == 2 * 16 * 16);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].total == b.history[i].total);
    CHECK(a.history[i].validation_psnr == b.history[i].validation_psnr);
  }
  std::ifstream fa(a.history_csv), fb(b.history_csv);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
  CHECK(sa.rfind("step,pixel,perceptual,adversarial_g,adversarial_d,total,validation_psnr\n", 0) == 0);
}

TEST_CASE("divergence aborts and keeps the last good checkpoint") {
  const auto spec = small(Family::EDSR, Dimensionality::D2);
  TrainConfig c = quick(Family::EDSR, 50);
  c.optimizer.learning_rate = 1e30;
  c.checkpoint_every = 1;
  const auto dir = temp_dir("diverge");
  try {
    train(spec, toy_dataset(), c, dir);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(std::filesystem::exists(e.last_good_checkpoint));
    auto loaded = load_checkpoint(e.last_good_checkpoint);
    for (auto& [name, p] : named_params(*loaded.net)) CHECK(all_finite(p->value));
  }
}

TEST_CASE("3D and adversarial training run end to end") {
  TrainConfig c3 = quick(Family::EDSR, 3);
  c3.batch_size = 1;
  const auto r3 = train(small(Family::EDSR, Dimensionality::D3), toy_dataset(), c3, temp_dir("t3d"));
  CHECK(r3.history.size() == 3);

  const auto gan = small(Family::ESRGAN, Dimensionality::D25);
  TrainConfig cg = quick(Family::ESRGAN, 5);
  cg.batch_size = 2;
  cg.hr_patch = 32;
  cg.patch_stride = 32;
  cg.discriminator_features = 8;
  const auto rg = train(gan, toy_dataset(), cg, temp_dir("gan"));
  REQUIRE(rg.history.size() == 5);
  CHECK(rg.history[0].adversarial_g == 0.0);  // warm start: pixel loss only
  CHECK(rg.history[4].adversarial_g > 0.0);
  CHECK(rg.history[4].perceptual > 0.0);
  CHECK(rg.history[4].total == doctest::Approx(1e-2 * rg.history[4].pixel + rg.history[4].perceptual +
                                               5e-3 * rg.history[4].adversarial_g));
}

TEST_CASE("train configuration validation and strict parsing") {
  TrainConfig c = TrainConfig::defaults_for(Family::SRCNN);
  CHECK(c.pixel_loss == PixelLossKind::L2);
  c.loss_weights.adversarial = 0.1;
  CHECK_THROWS_AS(c.validate(NetworkSpec::standard(Family::SRCNN, Dimensionality::D2)), ValidationError);
  const TrainConfig e = TrainConfig::defaults_for(Family::ESRGAN);
  CHECK(e.loss_weights.pixel == 1e-2);
  CHECK(e.loss_weights.perceptual == 1.0);
  CHECK(e.loss_weights.adversarial == 5e-3);
  const TrainConfig back = train_config_from_json(to_json(e), Family::ESRGAN);
  CHECK(to_json(back) == to_json(e));
  try {
    train_config_from_json({{"stepz", 3}}, Family::EDSR);
    FAIL("expected rejection");
  } catch (const ValidationError& err) {
    CHECK(std::string(err.what()) == "train.stepz: unknown key");
  }
  CHECK_THROWS_AS(train_config_from_json({{"steps", "many"}}, Family::EDSR), ValidationError);
}

TEST_CASE("Adam first step moves each weight by the learning rate against its gradient sign") {
  Param p{Tensor(Shape{1, 1, 1, 1, 3}), Tensor(Shape{1, 1, 1, 1, 3})};
  p.grad.data()[0] = 2.0f;
  p.grad.data()[1] = -0.5f;
  p.grad.data()[2] = 0.0f;
  Adam opt({&p}, AdamConfig{0.01, 0.9, 0.999, 1e-8});
  opt.step();
  CHECK(p.value.data()[0] == doctest::Approx(-0.01).epsilon(1e-4));
  CHECK(p.value.data()[1] == doctest::Approx(0.01).epsilon(1e-4));
  CHECK(p.value.data()[2] == 0.0f);
}
