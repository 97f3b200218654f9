#pragma once

#include <array>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace xctsr {

// 64-byte aligned storage so vectorised loops split work identically on every
// run (results do not depend on where malloc places a buffer).
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using AlignedFloats = std::vector<float, AlignedAllocator<float>>;

// Dense float tensor laid out as (batch, channels, depth, height, width).
// 2D feature maps use depth = 1; 2.5D windows put the slices on the channel axis.
struct Shape {
  int n = 1;
  int c = 1;
  int d = 1;
  int h = 1;
  int w = 1;

  std::size_t spatial() const { return std::size_t(d) * h * w; }
  std::size_t per_sample() const { return std::size_t(c) * spatial(); }
  std::size_t numel() const { return std::size_t(n) * per_sample(); }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f) : shape_(s), data_(s.numel(), fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float* sample(int i) { return data_.data() + std::size_t(i) * shape_.per_sample(); }
  const float* sample(int i) const { return data_.data() + std::size_t(i) * shape_.per_sample(); }
  float* channel(int i, int ch) { return sample(i) + std::size_t(ch) * shape_.spatial(); }
  const float* channel(int i, int ch) const {
    return sample(i) + std::size_t(ch) * shape_.spatial();
  }

  float& at(int n, int c, int z, int y, int x) {
    return data_[(((std::size_t(n) * shape_.c + c) * shape_.d + z) * shape_.h + y) * shape_.w + x];
  }
  float at(int n, int c, int z, int y, int x) const {
    return data_[(((std::size_t(n) * shape_.c + c) * shape_.d + z) * shape_.h + y) * shape_.w + x];
  }

  std::size_t offset(int n, int c, int z, int y, int x) const {
    return (((std::size_t(n) * shape_.c + c) * shape_.d + z) * shape_.h + y) * shape_.w + x;
  }
  float* ptr(int n, int c, int z, int y, int x) { return data_.data() + offset(n, c, z, y, x); }
  const float* ptr(int n, int c, int z, int y, int x) const {
    return data_.data() + offset(n, c, z, y, x);
  }

  void fill(float v);
  // Same storage, new shape with identical element count.
  Tensor reshaped(Shape s) const;

 private:
  Shape shape_{0, 0, 0, 0, 0};
  AlignedFloats data_;
};

void add_inplace(Tensor& dst, const Tensor& src, float scale = 1.0f);
bool all_finite(const Tensor& t);
float max_abs_diff(const Tensor& a, const Tensor& b);

// Concatenate samples along the batch axis; all inputs must share (c, d, h, w).
Tensor stack_batch(std::span<const Tensor> items);
// Extract sample i as a batch-of-one tensor.
Tensor take_sample(const Tensor& t, int i);

}  // namespace xctsr
