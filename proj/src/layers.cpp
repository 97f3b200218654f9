#include "xctsr/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "xctsr/error.hpp"

namespace xctsr {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstMatMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements per GEMM call.
constexpr std::size_t kColBudget = std::size_t(1) << 18;
// Output widths up to this use direct shifted-row accumulation instead of GEMM.
constexpr int kDirectMaxOut = 4;

struct ConvGeom {
  int cin, D, H, W;
  int kd, kh, kw;
  int sd, sh, sw;
  int pd, ph, pw;
  int od, oh, ow;
};

// Rows [row0, row1) of the flattened (od, oh) output grid; every row has ow columns.
void im2col(const float* x, const ConvGeom& g, int row0, int row1, float* col) {
  const int P = (row1 - row0) * g.ow;
  int r = 0;
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int kz = 0; kz < g.kd; ++kz) {
      for (int ky = 0; ky < g.kh; ++ky) {
        for (int kx = 0; kx < g.kw; ++kx, ++r) {
          float* dst = col + std::size_t(r) * P;
          for (int rr = row0; rr < row1; ++rr) {
            float* drow = dst + std::size_t(rr - row0) * g.ow;
            const int oz = rr / g.oh;
            const int oy = rr % g.oh;
            const int iz = oz * g.sd - g.pd + kz;
            const int iy = oy * g.sh - g.ph + ky;
            if (iz < 0 || iz >= g.D || iy < 0 || iy >= g.H) {
              std::fill(drow, drow + g.ow, 0.0f);
              continue;
            }
            const float* src = x + ((std::size_t(ci) * g.D + iz) * g.H + iy) * g.W;
            if (g.sw == 1) {
              const int off = kx - g.pw;
              const int lo = std::clamp(-off, 0, g.ow);
              const int hi = std::clamp(g.W - off, lo, g.ow);
              std::fill(drow, drow + lo, 0.0f);
              std::copy(src + lo + off, src + hi + off, drow + lo);
              std::fill(drow + hi, drow + g.ow, 0.0f);
            } else {
              for (int ox = 0; ox < g.ow; ++ox) {
                const int ix = ox * g.sw - g.pw + kx;
                drow[ox] = (ix >= 0 && ix < g.W) ? src[ix] : 0.0f;
              }
            }
          }
        }
      }
    }
  }
}

void col2im(const float* col, const ConvGeom& g, int row0, int row1, float* dx) {
  const int P = (row1 - row0) * g.ow;
  int r = 0;
  for (int ci = 0; ci < g.cin; ++ci) {
    for (int kz = 0; kz < g.kd; ++kz) {
      for (int ky = 0; ky < g.kh; ++ky) {
        for (int kx = 0; kx < g.kw; ++kx, ++r) {
          const float* srcc = col + std::size_t(r) * P;
          for (int rr = row0; rr < row1; ++rr) {
            const float* crow = srcc + std::size_t(rr - row0) * g.ow;
            const int oz = rr / g.oh;
            const int oy = rr % g.oh;
            const int iz = oz * g.sd - g.pd + kz;
            const int iy = oy * g.sh - g.ph + ky;
            if (iz < 0 || iz >= g.D || iy < 0 || iy >= g.H) continue;
            float* dst = dx + ((std::size_t(ci) * g.D + iz) * g.H + iy) * g.W;
            if (g.sw == 1) {
              const int off = kx - g.pw;
              const int lo = std::clamp(-off, 0, g.ow);
              const int hi = std::clamp(g.W - off, lo, g.ow);
              float* d = dst + off;
              for (int ox = lo; ox < hi; ++ox) d[ox] += crow[ox];
            } else {
              for (int ox = 0; ox < g.ow; ++ox) {
                const int ix = ox * g.sw - g.pw + kx;
                if (ix >= 0 && ix < g.W) dst[ix] += crow[ox];
              }
            }
          }
        }
      }
    }
  }
}

// Visits every (input row, output row) pair of a stride-1 convolution for one
// kernel tap: fn(x_row_offset, y_row_offset, lo, hi, off) with output columns
// [lo, hi) reading input columns shifted by off.
template <typename Fn>
void for_each_tap_row(const ConvGeom& g, int kz, int ky, int kx, Fn&& fn) {
  const int off = kx - g.pw;
  const int lo = std::clamp(-off, 0, g.ow);
  const int hi = std::clamp(g.W - off, lo, g.ow);
  if (lo >= hi) return;
  for (int oz = 0; oz < g.od; ++oz) {
    const int iz = oz - g.pd + kz;
    if (iz < 0 || iz >= g.D) continue;
    for (int oy = 0; oy < g.oh; ++oy) {
      const int iy = oy - g.ph + ky;
      if (iy < 0 || iy >= g.H) continue;
      fn((std::size_t(iz) * g.H + iy) * g.W, (std::size_t(oz) * g.oh + oy) * g.ow, lo, hi, off);
    }
  }
}

int rows_per_chunk(std::size_t K, int ow, int total_rows) {
  const std::size_t per_row = std::max<std::size_t>(1, K * std::size_t(ow));
  const auto rows = static_cast<int>(std::max<std::size_t>(1, kColBudget / per_row));
  return std::min(rows, total_rows);
}

// Linear interpolation taps along one axis for align_corners = false.
struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<float> w1;
};

AxisTaps linear_taps(int n_in, int n_out) {
  AxisTaps t;
  t.i0.resize(n_out);
  t.i1.resize(n_out);
  t.w1.resize(n_out);
  const double ratio = double(n_in) / double(n_out);
  for (int j = 0; j < n_out; ++j) {
    double src = (j + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int i0 = std::min(static_cast<int>(std::floor(src)), n_in - 1);
    int i1 = std::min(i0 + 1, n_in - 1);
    t.i0[j] = i0;
    t.i1[j] = i1;
    t.w1[j] = static_cast<float>(src - i0);
  }
  return t;
}

// in: [outer][n_in][inner] -> out: [outer][n_out][inner]
void interp_axis(const float* in, float* out, std::size_t outer, int n_in, int n_out,
                 std::size_t inner, const AxisTaps& t) {
  for (std::size_t o = 0; o < outer; ++o) {
    const float* src = in + o * n_in * inner;
    float* dst = out + o * n_out * inner;
    for (int j = 0; j < n_out; ++j) {
      const float* a = src + std::size_t(t.i0[j]) * inner;
      const float* b = src + std::size_t(t.i1[j]) * inner;
      const float w = t.w1[j];
      float* d = dst + std::size_t(j) * inner;
      for (std::size_t i = 0; i < inner; ++i) d[i] = (1.0f - w) * a[i] + w * b[i];
    }
  }
}

void interp_axis_backward(const float* gout, float* gin, std::size_t outer, int n_in, int n_out,
                          std::size_t inner, const AxisTaps& t) {
  std::fill(gin, gin + outer * n_in * inner, 0.0f);
  for (std::size_t o = 0; o < outer; ++o) {
    const float* src = gout + o * n_out * inner;
    float* dst = gin + o * n_in * inner;
    for (int j = 0; j < n_out; ++j) {
      float* a = dst + std::size_t(t.i0[j]) * inner;
      float* b = dst + std::size_t(t.i1[j]) * inner;
      const float w = t.w1[j];
      const float* g = src + std::size_t(j) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        a[i] += (1.0f - w) * g[i];
        b[i] += w * g[i];
      }
    }
  }
}

}  // namespace

std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

// ---------------------------------------------------------------- Conv

Conv::Conv(int in_channels, int out_channels, Triple kernel, Triple stride, Triple pad, bool bias)
    : cin_(in_channels), cout_(out_channels), k_(kernel), s_(stride), p_(pad), has_bias_(bias) {
  require(cin_ > 0 && cout_ > 0, "conv channel counts must be positive");
  require(k_.d > 0 && k_.h > 0 && k_.w > 0, "conv kernel sizes must be positive");
  require(s_.d > 0 && s_.h > 0 && s_.w > 0, "conv strides must be positive");
  weight_.value = Tensor(Shape{cout_, cin_, k_.d, k_.h, k_.w});
  weight_.grad = Tensor(weight_.value.shape());
  if (has_bias_) {
    bias_.value = Tensor(Shape{cout_, 1, 1, 1, 1});
    bias_.grad = Tensor(bias_.value.shape());
  }
}

std::unique_ptr<Conv> Conv::same(int in_channels, int out_channels, Triple kernel, bool bias) {
  require(kernel.d % 2 == 1 && kernel.h % 2 == 1 && kernel.w % 2 == 1,
          "same padding needs odd kernel sizes");
  return std::make_unique<Conv>(in_channels, out_channels, kernel, Triple{1, 1, 1},
                                Triple{kernel.d / 2, kernel.h / 2, kernel.w / 2}, bias);
}

void Conv::init_fan_in(std::mt19937_64& rng, float gain) {
  const double fan_in = double(cin_) * k_.d * k_.h * k_.w;
  const float bound = static_cast<float>(gain / std::sqrt(fan_in));
  std::uniform_real_distribution<float> u(-bound, bound);
  for (float& v : weight_.value.values()) v = u(rng);
  if (has_bias_) {
    for (float& v : bias_.value.values()) v = u(rng);
  }
}

Shape Conv::output_shape(const Shape& in) const {
  require(in.c == cin_, "conv expects " + std::to_string(cin_) + " input channels, got " +
                            std::to_string(in.c) + " in " + in.str());
  Shape out{in.n, cout_, (in.d + 2 * p_.d - k_.d) / s_.d + 1, (in.h + 2 * p_.h - k_.h) / s_.h + 1,
            (in.w + 2 * p_.w - k_.w) / s_.w + 1};
  require(in.d + 2 * p_.d >= k_.d && in.h + 2 * p_.h >= k_.h && in.w + 2 * p_.w >= k_.w,
          "conv input " + in.str() + " smaller than kernel");
  return out;
}

void Conv::forward_view(const float* x, const Shape& in, std::size_t x_stride, float* y,
                        std::size_t y_stride) const {
  const Shape os = output_shape(in);
  ConvGeom g{cin_, in.d, in.h, in.w, k_.d, k_.h, k_.w, s_.d, s_.h, s_.w,
             p_.d, p_.h, p_.w, os.d, os.h, os.w};
  const std::size_t K = std::size_t(cin_) * k_.d * k_.h * k_.w;
  const auto Ki = static_cast<Eigen::Index>(K);
  const int total_rows = os.d * os.h;
  const int chunk = rows_per_chunk(K, os.w, total_rows);
  const auto out_spatial = static_cast<Eigen::Index>(os.spatial());
  AlignedFloats col(K * std::size_t(chunk) * os.w);
  ConstMatMap wmat(weight_.value.data(), cout_, Ki, Eigen::OuterStride<>(Ki));
  const bool direct = cout_ <= kDirectMaxOut && s_.d == 1 && s_.h == 1 && s_.w == 1;
  if (direct) {
    const std::size_t in_sp = in.spatial(), out_sp = os.spatial();
    for (int n = 0; n < in.n; ++n) {
      for (int co = 0; co < cout_; ++co) {
        float* yc = y + n * y_stride + co * out_sp;
        std::fill(yc, yc + out_sp, has_bias_ ? bias_.value.data()[co] : 0.0f);
        const float* wc = weight_.value.data() + std::size_t(co) * K;
        int t = 0;
        for (int ci = 0; ci < cin_; ++ci) {
          const float* xc = x + n * x_stride + ci * in_sp;
          for (int kz = 0; kz < k_.d; ++kz)
            for (int ky = 0; ky < k_.h; ++ky)
              for (int kx = 0; kx < k_.w; ++kx, ++t) {
                const float w = wc[t];
                for_each_tap_row(g, kz, ky, kx, [&](std::size_t xo, std::size_t yo, int lo, int hi, int off) {
                  const float* xr = xc + xo + off;
                  float* yr = yc + yo;
                  for (int i = lo; i < hi; ++i) yr[i] += w * xr[i];
                });
              }
        }
      }
    }
    return;
  }
  for (int n = 0; n < in.n; ++n) {
    const float* xs = x + n * x_stride;
    float* ys = y + n * y_stride;
    for (int r0 = 0; r0 < total_rows; r0 += chunk) {
      const int r1 = std::min(total_rows, r0 + chunk);
      const int P = (r1 - r0) * os.w;
      MatMap ymat(ys + std::size_t(r0) * os.w, cout_, P, Eigen::OuterStride<>(out_spatial));
      if (K == std::size_t(cin_) && s_.d == 1 && s_.h == 1 && s_.w == 1 && p_.d == 0 &&
          p_.h == 0 && p_.w == 0) {
        // 1x1x1 kernel: the input already is the column matrix.
        ConstMatMap xmat(xs + std::size_t(r0) * os.w, Ki, P,
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(in.spatial())));
        ymat.noalias() = wmat * xmat;
      } else {
        im2col(xs, g, r0, r1, col.data());
        ConstMatMap cmat(col.data(), Ki, P, Eigen::OuterStride<>(P));
        ymat.noalias() = wmat * cmat;
      }
      if (has_bias_) {
        for (int co = 0; co < cout_; ++co) ymat.row(co).array() += bias_.value.data()[co];
      }
    }
  }
}

void Conv::backward_view(const float* x, const Shape& in, std::size_t x_stride, const float* gy,
                         std::size_t gy_stride, float* dx, std::size_t dx_stride) {
  const Shape os = output_shape(in);
  ConvGeom g{cin_, in.d, in.h, in.w, k_.d, k_.h, k_.w, s_.d, s_.h, s_.w,
             p_.d, p_.h, p_.w, os.d, os.h, os.w};
  const std::size_t K = std::size_t(cin_) * k_.d * k_.h * k_.w;
  const auto Ki = static_cast<Eigen::Index>(K);
  const int total_rows = os.d * os.h;
  const int chunk = rows_per_chunk(K, os.w, total_rows);
  const auto out_spatial = static_cast<Eigen::Index>(os.spatial());
  const bool direct = cout_ <= kDirectMaxOut && s_.d == 1 && s_.h == 1 && s_.w == 1;
  if (direct) {
    const std::size_t in_sp = in.spatial(), out_sp = os.spatial();
    for (int n = 0; n < in.n; ++n) {
      for (int co = 0; co < cout_; ++co) {
        const float* gc = gy + n * gy_stride + co * out_sp;
        if (has_bias_) {
          double acc = 0;
          for (std::size_t i = 0; i < out_sp; ++i) acc += gc[i];
          bias_.grad.data()[co] += float(acc);
        }
        const float* wc = weight_.value.data() + std::size_t(co) * K;
        float* dwc = weight_.grad.data() + std::size_t(co) * K;
        int t = 0;
        for (int ci = 0; ci < cin_; ++ci) {
          const float* xc = x + n * x_stride + ci * in_sp;
          float* dxc = dx + n * dx_stride + ci * in_sp;
          for (int kz = 0; kz < k_.d; ++kz)
            for (int ky = 0; ky < k_.h; ++ky)
              for (int kx = 0; kx < k_.w; ++kx, ++t) {
                const float w = wc[t];
                float dw = 0.0f;
                for_each_tap_row(g, kz, ky, kx, [&](std::size_t xo, std::size_t yo, int lo, int hi, int off) {
                  const float* xr = xc + xo + off;
                  float* dxr = dxc + xo + off;
                  const float* gr = gc + yo;
                  float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
                  for (int i = lo; i < hi; ++i) {
                    dxr[i] += w * gr[i];
                    acc += gr[i] * xr[i];
                  }
                  dw += acc;
                });
                dwc[t] += dw;
              }
        }
      }
    }
    return;
  }
  AlignedFloats col(K * std::size_t(chunk) * os.w);
  AlignedFloats dcol(col.size());
  ConstMatMap wmat(weight_.value.data(), cout_, Ki, Eigen::OuterStride<>(Ki));
  MatMap dwmat(weight_.grad.data(), cout_, Ki, Eigen::OuterStride<>(Ki));
  for (int n = 0; n < in.n; ++n) {
    const float* xs = x + n * x_stride;
    const float* gs = gy + n * gy_stride;
    float* dxs = dx + n * dx_stride;
    for (int r0 = 0; r0 < total_rows; r0 += chunk) {
      const int r1 = std::min(total_rows, r0 + chunk);
      const int P = (r1 - r0) * os.w;
      im2col(xs, g, r0, r1, col.data());
      ConstMatMap cmat(col.data(), Ki, P, Eigen::OuterStride<>(P));
      ConstMatMap gmat(gs + std::size_t(r0) * os.w, cout_, P, Eigen::OuterStride<>(out_spatial));
      dwmat.noalias() += gmat * cmat.transpose();
      if (has_bias_) {
        for (int co = 0; co < cout_; ++co) bias_.grad.data()[co] += gmat.row(co).sum();
      }
      MatMap dcmat(dcol.data(), Ki, P, Eigen::OuterStride<>(P));
      dcmat.noalias() = wmat.transpose() * gmat;
      col2im(dcol.data(), g, r0, r1, dxs);
    }
  }
}

Tensor Conv::forward(const Tensor& x) {
  const Shape in = x.shape();
  Tensor out(output_shape(in));
  forward_view(x.data(), in, in.per_sample(), out.data(), out.shape().per_sample());
  if (training_) input_ = x;
  return out;
}

Tensor Conv::backward(const Tensor& grad_out) {
  require(!input_.empty(), "conv backward without a cached forward");
  const Shape in = input_.shape();
  const Shape os = output_shape(in);
  require(grad_out.shape() == os, "conv grad shape " + grad_out.shape().str() + " != " + os.str());
  Tensor dx(in);
  backward_view(input_.data(), in, in.per_sample(), grad_out.data(), os.per_sample(), dx.data(),
                in.per_sample());
  return dx;
}

void Conv::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_name(prefix, "weight"), weight_);
  if (has_bias_) fn(join_name(prefix, "bias"), bias_);
}

// ---------------------------------------------------------------- LeakyReLU

Tensor LeakyReLU::forward(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.values()) v = v > 0.0f ? v : v * slope_;
  if (training_) input_ = x;
  return out;
}

Tensor LeakyReLU::backward(const Tensor& grad_out) {
  require(input_.shape() == grad_out.shape(), "activation backward shape mismatch");
  Tensor dx = grad_out;
  const float* x = input_.data();
  float* d = dx.data();
  for (std::size_t i = 0; i < dx.numel(); ++i) {
    if (!(x[i] > 0.0f)) d[i] *= slope_;
  }
  return dx;
}

// ---------------------------------------------------------------- PixelShuffle

Shape PixelShuffle::output_shape(const Shape& in) const {
  require(in.d == 1, "pixel shuffle is 2D only, got " + in.str());
  require(in.c % (r_ * r_) == 0, "pixel shuffle channels not divisible by factor^2");
  return Shape{in.n, in.c / (r_ * r_), 1, in.h * r_, in.w * r_};
}

Tensor PixelShuffle::forward(const Tensor& x) {
  const Shape in = x.shape();
  const Shape os = output_shape(in);
  Tensor out(os);
  for (int n = 0; n < in.n; ++n) {
    for (int c = 0; c < os.c; ++c) {
      for (int i = 0; i < r_; ++i) {
        for (int j = 0; j < r_; ++j) {
          const float* src = x.channel(n, c * r_ * r_ + i * r_ + j);
          for (int y = 0; y < in.h; ++y) {
            for (int xx = 0; xx < in.w; ++xx) {
              out.at(n, c, 0, y * r_ + i, xx * r_ + j) = src[y * in.w + xx];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor PixelShuffle::backward(const Tensor& grad_out) {
  const Shape os = grad_out.shape();
  Shape in{os.n, os.c * r_ * r_, 1, os.h / r_, os.w / r_};
  Tensor dx(in);
  for (int n = 0; n < in.n; ++n) {
    for (int c = 0; c < os.c; ++c) {
      for (int i = 0; i < r_; ++i) {
        for (int j = 0; j < r_; ++j) {
          float* dst = dx.channel(n, c * r_ * r_ + i * r_ + j);
          for (int y = 0; y < in.h; ++y) {
            for (int xx = 0; xx < in.w; ++xx) {
              dst[y * in.w + xx] = grad_out.at(n, c, 0, y * r_ + i, xx * r_ + j);
            }
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- UpsampleNearest

Shape UpsampleNearest::output_shape(const Shape& in) const {
  return Shape{in.n, in.c, in.d * f_.d, in.h * f_.h, in.w * f_.w};
}

Tensor UpsampleNearest::forward(const Tensor& x) {
  const Shape in = x.shape();
  const Shape os = output_shape(in);
  Tensor out(os);
  for (int n = 0; n < in.n; ++n) {
    for (int c = 0; c < in.c; ++c) {
      for (int z = 0; z < os.d; ++z) {
        for (int y = 0; y < os.h; ++y) {
          const float* src = x.channel(n, c) + (std::size_t(z / f_.d) * in.h + y / f_.h) * in.w;
          float* dst = out.ptr(n, c, z, y, 0);
          for (int xx = 0; xx < os.w; ++xx) dst[xx] = src[xx / f_.w];
        }
      }
    }
  }
  in_shape_ = in;
  return out;
}

Tensor UpsampleNearest::backward(const Tensor& grad_out) {
  const Shape os = grad_out.shape();
  Shape in{os.n, os.c, os.d / f_.d, os.h / f_.h, os.w / f_.w};
  Tensor dx(in);
  for (int n = 0; n < os.n; ++n) {
    for (int c = 0; c < os.c; ++c) {
      for (int z = 0; z < os.d; ++z) {
        for (int y = 0; y < os.h; ++y) {
          float* dst = dx.channel(n, c) + (std::size_t(z / f_.d) * in.h + y / f_.h) * in.w;
          const float* src = grad_out.ptr(n, c, z, y, 0);
          for (int xx = 0; xx < os.w; ++xx) dst[xx / f_.w] += src[xx];
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- UpsampleLinear

Shape UpsampleLinear::output_shape(const Shape& in) const {
  return Shape{in.n, in.c, in.d * f_.d, in.h * f_.h, in.w * f_.w};
}

Tensor UpsampleLinear::forward(const Tensor& x) {
  const Shape in = x.shape();
  const Shape os = output_shape(in);
  const std::size_t nc = std::size_t(in.n) * in.c;
  // w axis, then h, then d
  Tensor t1(Shape{in.n, in.c, in.d, in.h, os.w});
  interp_axis(x.data(), t1.data(), nc * in.d * in.h, in.w, os.w, 1, linear_taps(in.w, os.w));
  Tensor t2(Shape{in.n, in.c, in.d, os.h, os.w});
  interp_axis(t1.data(), t2.data(), nc * in.d, in.h, os.h, os.w, linear_taps(in.h, os.h));
  Tensor out(os);
  interp_axis(t2.data(), out.data(), nc, in.d, os.d, std::size_t(os.h) * os.w,
              linear_taps(in.d, os.d));
  in_shape_ = in;
  return out;
}

Tensor UpsampleLinear::backward(const Tensor& grad_out) {
  const Shape os = grad_out.shape();
  const Shape in{os.n, os.c, os.d / f_.d, os.h / f_.h, os.w / f_.w};
  const std::size_t nc = std::size_t(in.n) * in.c;
  Tensor g2(Shape{in.n, in.c, in.d, os.h, os.w});
  interp_axis_backward(grad_out.data(), g2.data(), nc, in.d, os.d, std::size_t(os.h) * os.w,
                       linear_taps(in.d, os.d));
  Tensor g1(Shape{in.n, in.c, in.d, in.h, os.w});
  interp_axis_backward(g2.data(), g1.data(), nc * in.d, in.h, os.h, os.w, linear_taps(in.h, os.h));
  Tensor dx(in);
  interp_axis_backward(g1.data(), dx.data(), nc * in.d * in.h, in.w, os.w, 1,
                       linear_taps(in.w, os.w));
  return dx;
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels, float momentum, float eps)
    : c_(channels), momentum_(momentum), eps_(eps),
      running_mean_(channels, 0.0f), running_var_(channels, 1.0f) {
  gamma_.value = Tensor(Shape{c_, 1, 1, 1, 1}, 1.0f);
  gamma_.grad = Tensor(gamma_.value.shape());
  beta_.value = Tensor(Shape{c_, 1, 1, 1, 1});
  beta_.grad = Tensor(beta_.value.shape());
}

void BatchNorm::set_running(std::vector<float> mean, std::vector<float> var) {
  require(int(mean.size()) == c_ && int(var.size()) == c_, "batch norm running stats size");
  running_mean_ = std::move(mean);
  running_var_ = std::move(var);
}

Tensor BatchNorm::forward(const Tensor& x) {
  const Shape s = x.shape();
  require(s.c == c_, "batch norm channel mismatch");
  const std::size_t sp = s.spatial();
  const std::size_t m = sp * s.n;
  Tensor out(s);
  if (training_) xhat_ = Tensor(s);
  inv_std_.assign(c_, 0.0f);
  for (int c = 0; c < c_; ++c) {
    double mean = 0.0, var = 0.0;
    if (training_) {
      for (int n = 0; n < s.n; ++n) {
        const float* p = x.channel(n, c);
        for (std::size_t i = 0; i < sp; ++i) mean += p[i];
      }
      mean /= double(m);
      for (int n = 0; n < s.n; ++n) {
        const float* p = x.channel(n, c);
        for (std::size_t i = 0; i < sp; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= double(m);
      const double unbiased = m > 1 ? var * double(m) / double(m - 1) : var;
      running_mean_[c] = float((1.0 - momentum_) * running_mean_[c] + momentum_ * mean);
      running_var_[c] = float((1.0 - momentum_) * running_var_[c] + momentum_ * unbiased);
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const float inv = float(1.0 / std::sqrt(var + eps_));
    inv_std_[c] = inv;
    const float g = gamma_.value.data()[c];
    const float b = beta_.value.data()[c];
    for (int n = 0; n < s.n; ++n) {
      const float* p = x.channel(n, c);
      float* o = out.channel(n, c);
      float* xh = training_ ? xhat_.channel(n, c) : nullptr;
      for (std::size_t i = 0; i < sp; ++i) {
        const float h = (p[i] - float(mean)) * inv;
        if (xh) xh[i] = h;
        o[i] = g * h + b;
      }
    }
  }
  return out;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  require(xhat_.shape() == grad_out.shape(), "batch norm backward without cached forward");
  const Shape s = grad_out.shape();
  const std::size_t sp = s.spatial();
  const double m = double(sp) * s.n;
  Tensor dx(s);
  for (int c = 0; c < c_; ++c) {
    const float g = gamma_.value.data()[c];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const float* dy = grad_out.channel(n, c);
      const float* xh = xhat_.channel(n, c);
      for (std::size_t i = 0; i < sp; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    gamma_.grad.data()[c] += float(sum_dy_xhat);
    beta_.grad.data()[c] += float(sum_dy);
    const double scale = g * inv_std_[c] / m;
    for (int n = 0; n < s.n; ++n) {
      const float* dy = grad_out.channel(n, c);
      const float* xh = xhat_.channel(n, c);
      float* d = dx.channel(n, c);
      for (std::size_t i = 0; i < sp; ++i) {
        d[i] = float(scale * (m * dy[i] - sum_dy - xh[i] * sum_dy_xhat));
      }
    }
  }
  return dx;
}

void BatchNorm::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_name(prefix, "weight"), gamma_);
  fn(join_name(prefix, "bias"), beta_);
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features) : in_(in_features), out_(out_features) {
  weight_.value = Tensor(Shape{out_, in_, 1, 1, 1});
  weight_.grad = Tensor(weight_.value.shape());
  bias_.value = Tensor(Shape{out_, 1, 1, 1, 1});
  bias_.grad = Tensor(bias_.value.shape());
}

void Linear::init_fan_in(std::mt19937_64& rng, float gain) {
  const float bound = static_cast<float>(gain / std::sqrt(double(in_)));
  std::uniform_real_distribution<float> u(-bound, bound);
  for (float& v : weight_.value.values()) v = u(rng);
  for (float& v : bias_.value.values()) v = u(rng);
}

Shape Linear::output_shape(const Shape& in) const {
  require(int(in.per_sample()) == in_, "linear expects " + std::to_string(in_) +
                                           " features per sample, got " + in.str());
  return Shape{in.n, out_, 1, 1, 1};
}

Tensor Linear::forward(const Tensor& x) {
  const Shape os = output_shape(x.shape());
  Tensor out(os);
  ConstMatMap w(weight_.value.data(), out_, in_, Eigen::OuterStride<>(in_));
  ConstMatMap xm(x.data(), os.n, in_, Eigen::OuterStride<>(in_));
  MatMap ym(out.data(), os.n, out_, Eigen::OuterStride<>(out_));
  ym.noalias() = xm * w.transpose();
  for (int n = 0; n < os.n; ++n) {
    for (int o = 0; o < out_; ++o) ym(n, o) += bias_.value.data()[o];
  }
  if (training_) input_ = x;
  return out;
}

Tensor Linear::backward(const Tensor& grad_out) {
  require(!input_.empty(), "linear backward without cached forward");
  const int n = grad_out.shape().n;
  Tensor dx(input_.shape());
  ConstMatMap w(weight_.value.data(), out_, in_, Eigen::OuterStride<>(in_));
  ConstMatMap xm(input_.data(), n, in_, Eigen::OuterStride<>(in_));
  ConstMatMap gm(grad_out.data(), n, out_, Eigen::OuterStride<>(out_));
  MatMap dw(weight_.grad.data(), out_, in_, Eigen::OuterStride<>(in_));
  MatMap dxm(dx.data(), n, in_, Eigen::OuterStride<>(in_));
  dw.noalias() += gm.transpose() * xm;
  dxm.noalias() = gm * w;
  for (int o = 0; o < out_; ++o) bias_.grad.data()[o] += gm.col(o).sum();
  return dx;
}

void Linear::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  fn(join_name(prefix, "weight"), weight_);
  fn(join_name(prefix, "bias"), bias_);
}

// ---------------------------------------------------------------- Sequential

Sequential& Sequential::add(std::string name, LayerPtr layer) {
  layers_.emplace_back(std::move(name), std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x) {
  Tensor cur = x;
  for (auto& [name, layer] : layers_) cur = layer->forward(cur);
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

Shape Sequential::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& [name, layer] : layers_) s = layer->output_shape(s);
  return s;
}

Shape Sequential::trace(const Shape& in, const std::string& prefix, ActivationTrace& acts) const {
  Shape s = in;
  for (const auto& [name, layer] : layers_) s = layer->trace(s, join_name(prefix, name), acts);
  return s;
}

void Sequential::visit_params(const std::string& prefix, const ParamVisitor& fn) {
  for (auto& [name, layer] : layers_) layer->visit_params(join_name(prefix, name), fn);
}

void Sequential::set_training(bool on) {
  training_ = on;
  for (auto& [name, layer] : layers_) layer->set_training(on);
}

}  // namespace xctsr
