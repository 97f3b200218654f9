#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "xctsr/layers.hpp"
#include "xctsr/tensor.hpp"

namespace gradcheck {

inline xctsr::Tensor random_tensor(const xctsr::Shape& s, std::mt19937_64& rng, float lo = -1.0f,
                                   float hi = 1.0f) {
  xctsr::Tensor t(s);
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& v : t.values()) v = u(rng);
  return t;
}

inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct Summary {
  std::size_t checked = 0;
  std::size_t within = 0;
  double worst = 0.0;
  double fraction() const { return checked ? double(within) / double(checked) : 1.0; }
};

// Central differences of `loss` with respect to every entry of `values`
// compared against `analytic` (same size).
inline Summary compare(const std::function<double()>& loss, std::span<float> values, std::span<const float> analytic,
                       double h, double tol, double floor = 1e-6) {
  Summary s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float orig = values[i];
    values[i] = orig + float(h);
    const double up = loss();
    values[i] = orig - float(h);
    const double down = loss();
    values[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double e = relative_error(analytic[i], numeric, floor);
    ++s.checked;
    if (e <= tol) ++s.within;
    s.worst = std::max(s.worst, e);
  }
  return s;
}

// Checks input and parameter gradients of a layer under the loss sum(w * y).
inline Summary check_layer(xctsr::Layer& layer, const xctsr::Shape& in_shape, std::uint64_t seed, double h = 1e-2,
                           double tol = 2e-2) {
  std::mt19937_64 rng(seed);
  xctsr::Tensor x = random_tensor(in_shape, rng);
  layer.set_training(true);
  const xctsr::Shape out_shape = layer.output_shape(in_shape);
  const xctsr::Tensor w = random_tensor(out_shape, rng);
  auto loss = [&]() {
    const xctsr::Tensor y = layer.forward(x);
    double acc = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += double(y.data()[i]) * w.data()[i];
    return acc;
  };
  layer.visit_params("", [](const std::string&, xctsr::Param& p) { p.grad.fill(0.0f); });
  loss();
  const xctsr::Tensor dx = layer.backward(w);
  std::vector<std::pair<xctsr::Param*, xctsr::Tensor>> grads;
  layer.visit_params("", [&](const std::string&, xctsr::Param& p) { grads.emplace_back(&p, p.grad); });
  Summary total = compare(loss, x.values(), dx.values(), h, tol);
  for (auto& [p, g] : grads) {
    const Summary s = compare(loss, p->value.values(), g.values(), h, tol);
    total.checked += s.checked;
    total.within += s.within;
    total.worst = std::max(total.worst, s.worst);
  }
  return total;
}

}  // namespace gradcheck
