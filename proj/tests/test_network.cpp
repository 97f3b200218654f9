#include <doctest.h>

#include <random>

#include "gradcheck.hpp"
#include "xctsr/error.hpp"
#include "xctsr/network.hpp"

using namespace xctsr;

namespace {

std::int64_t total(Family f, Dimensionality d) {
  auto net = build_network(NetworkSpec::standard(f, d));
  return count_parameters(*net).total;
}

// Closed-form SRCNN count: k1*k1*c*n1 + n1 + k2*k2*n1*n2 + n2 + k3*k3*n2 + 1
// (kernel depth multiplies every term in 3D).
std::int64_t srcnn_closed_form(int c, int depth_mul) {
  return std::int64_t(depth_mul == 1 ? 81 : 729) * c * 64 + 64 + std::int64_t(depth_mul == 1 ? 25 : 125) * 64 * 32 +
         32 + std::int64_t(depth_mul == 1 ? 25 : 125) * 32 + 1;
}

}  // namespace

TEST_CASE("SRCNN and EDSR parameter counts") {
  CHECK(total(Family::SRCNN, Dimensionality::D2) == 57281);
  CHECK(total(Family::SRCNN, Dimensionality::D25) == 88385);
  CHECK(total(Family::SRCNN, Dimensionality::D3) == 306753);
  CHECK(total(Family::SRCNN, Dimensionality::D2) == srcnn_closed_form(1, 1));
  CHECK(total(Family::SRCNN, Dimensionality::D25) == srcnn_closed_form(7, 1));
  CHECK(total(Family::SRCNN, Dimensionality::D3) == srcnn_closed_form(1, 3));
  CHECK(total(Family::EDSR, Dimensionality::D2) == 1515265);
  CHECK(total(Family::EDSR, Dimensionality::D25) == 1518721);
  CHECK(total(Family::EDSR, Dimensionality::D3) == 3655169);
}

TEST_CASE("first-layer delta is (slices - 1) * m * n * k for every family") {
  for (Family f : {Family::SRCNN, Family::EDSR, Family::ESRGAN}) {
    const auto s2 = NetworkSpec::standard(f, Dimensionality::D2);
    const auto s25 = NetworkSpec::standard(f, Dimensionality::D25);
    const std::int64_t m = s2.first_kernel();
    const std::int64_t expected = 6 * m * m * s2.first_features();
    CHECK(first_layer_parameter_delta(s2, s25) == expected);
    CHECK(total(f, Dimensionality::D25) - total(f, Dimensionality::D2) == expected);
    auto n25 = build_network(s25);
    CHECK(count_parameters(*n25).first_layer_delta_vs_2d == expected);
  }
  CHECK(first_layer_parameter_delta(NetworkSpec::standard(Family::SRCNN, Dimensionality::D2),
                                    NetworkSpec::standard(Family::SRCNN, Dimensionality::D25)) == 31104);
  CHECK(first_layer_parameter_delta(NetworkSpec::standard(Family::EDSR, Dimensionality::D2),
                                    NetworkSpec::standard(Family::EDSR, Dimensionality::D25)) == 3456);
}

TEST_CASE("first-layer delta rejects specs that differ elsewhere") {
  auto a = NetworkSpec::standard(Family::EDSR, Dimensionality::D2);
  auto b = NetworkSpec::standard(Family::EDSR, Dimensionality::D25);
  b.edsr_blocks = 8;
  CHECK_THROWS_AS(first_layer_parameter_delta(a, b), ValidationError);
}

TEST_CASE("ESRGAN generator and discriminator accounting") {
  auto g2 = build_network(NetworkSpec::standard(Family::ESRGAN, Dimensionality::D2));
  const auto r2 = count_parameters(*g2);
  std::int64_t sum = 0;
  for (const auto& [name, n] : r2.per_layer) sum += n;
  CHECK(sum == r2.total);
  CHECK(r2.per_layer.size() > 5);
  auto d2 = build_discriminator(NetworkSpec::standard(Family::ESRGAN, Dimensionality::D2));
  CHECK(count_parameters(*d2).total == 14498249);
  CHECK(r2.total + count_parameters(*d2).total == 31193930);
  CHECK(total(Family::ESRGAN, Dimensionality::D25) - r2.total == 3456);
}

TEST_CASE("network output shapes follow the spec contract") {
  std::mt19937_64 rng(1);
  for (Family f : {Family::SRCNN, Family::EDSR}) {
    for (Dimensionality d : {Dimensionality::D2, Dimensionality::D25, Dimensionality::D3}) {
      auto spec = NetworkSpec::standard(f, d);
      spec.edsr_blocks = 2;
      auto net = build_network(spec, 3);
      const Shape in = spec.input_shape(2, 8, 12, 4);
      const Tensor y = net->forward(gradcheck::random_tensor(in, rng));
      CHECK(y.shape() == spec.output_shape(in));
      const int s = spec.output_scale();
      CHECK(y.shape().h == 8 * s);
      CHECK(y.shape().w == 12 * s);
    }
  }
  auto esr = NetworkSpec::standard(Family::ESRGAN, Dimensionality::D25);
  esr.esrgan_rrdb_blocks = 1;
  auto net = build_network(esr, 1);
  const Tensor y = net->forward(gradcheck::random_tensor(esr.input_shape(1, 6, 6), rng));
  CHECK(y.shape() == Shape{1, 1, 1, 24, 24});
}

TEST_CASE("forward rejects inputs that violate the spec") {
  auto net = build_network(NetworkSpec::standard(Family::SRCNN, Dimensionality::D25));
  try {
    net->forward(Tensor(Shape{1, 1, 1, 8, 8}));
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("expected (N, 7, 1, H, W)") != std::string::npos);
  }
}

TEST_CASE("spec validation") {
  auto s = NetworkSpec::standard(Family::EDSR, Dimensionality::D2);
  s.scale = 3;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = NetworkSpec::standard(Family::SRCNN, Dimensionality::D25);
  s.in_slices = 4;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.in_slices = 1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("building is deterministic in the seed") {
  auto spec = NetworkSpec::standard(Family::EDSR, Dimensionality::D2);
  spec.edsr_blocks = 2;
  auto a = build_network(spec, 9), b = build_network(spec, 9), c = build_network(spec, 10);
  auto pa = named_params(*a), pb = named_params(*b), pc = named_params(*c);
  CHECK(max_abs_diff(pa[0].second->value, pb[0].second->value) == 0.0f);
  CHECK(max_abs_diff(pa[0].second->value, pc[0].second->value) > 0.0f);
}

TEST_CASE("reduced networks pass end-to-end gradient checks") {
  for (Family f : {Family::EDSR, Family::ESRGAN}) {
    auto spec = NetworkSpec::standard(f, Dimensionality::D25);
    spec.in_slices = 3;
    spec.features = 4;
    spec.edsr_blocks = 1;
    spec.esrgan_rrdb_blocks = 1;
    spec.esrgan_growth = 2;
    spec.scale = 2;
    auto net = build_network(spec, 4);
    std::mt19937_64 rng(8);
    const Tensor x = gradcheck::random_tensor(spec.input_shape(1, 3, 3), rng);
    const Tensor w = gradcheck::random_tensor(spec.output_shape(x.shape()), rng);
    net->set_training(true);
    auto loss = [&]() {
      const Tensor y = net->forward(x);
      double acc = 0;
      for (std::size_t i = 0; i < y.numel(); ++i) acc += double(y.data()[i]) * w.data()[i];
      return acc;
    };
    net->zero_grad();
    loss();
    net->backward(w);
    std::size_t checked = 0, within = 0;
    for (auto& [name, p] : named_params(*net)) {
      const Tensor g = p->grad;
      const auto s = gradcheck::compare(loss, p->value.values(), g.values(), 1e-2, 2e-2, 1e-4);
      checked += s.checked;
      within += s.within;
    }
    CHECK(double(within) / double(checked) > 0.97);
  }
}
