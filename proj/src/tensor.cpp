#include "xctsr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xctsr/error.hpp"

namespace xctsr {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << c << ", " << d << ", " << h << ", " << w << ")";
  return os.str();
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape s) const {
  require(s.numel() == numel(), "reshape " + shape_.str() + " -> " + s.str() + " changes size");
  Tensor out;
  out.shape_ = s;
  out.data_ = data_;
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src, float scale) {
  require(dst.shape() == src.shape(),
          "add shape mismatch " + dst.shape().str() + " vs " + src.shape().str());
  float* d = dst.data();
  const float* s = src.data();
  const std::size_t n = dst.numel();
  if (scale == 1.0f) {
    for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) d[i] += scale * s[i];
  }
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data(), t.data() + t.numel(), [](float v) { return std::isfinite(v); });
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "max_abs_diff shape mismatch");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Tensor stack_batch(std::span<const Tensor> items) {
  require(!items.empty(), "stack_batch needs at least one tensor");
  Shape s = items.front().shape();
  int total = 0;
  for (const auto& t : items) {
    Shape ts = t.shape();
    require(ts.c == s.c && ts.d == s.d && ts.h == s.h && ts.w == s.w,
            "stack_batch shape mismatch " + ts.str() + " vs " + s.str());
    total += ts.n;
  }
  s.n = total;
  Tensor out(s);
  float* dst = out.data();
  for (const auto& t : items) dst = std::copy(t.data(), t.data() + t.numel(), dst);
  return out;
}

Tensor take_sample(const Tensor& t, int i) {
  Shape s = t.shape();
  require(i >= 0 && i < s.n, "sample index out of range");
  s.n = 1;
  Tensor out(s);
  std::copy(t.sample(i), t.sample(i) + s.per_sample(), out.data());
  return out;
}

}  // namespace xctsr
