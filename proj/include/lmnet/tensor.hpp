#pragma once

#include <algorithm>
#include <cstddef>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmnet/error.hpp"

namespace lmnet {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [&](std::size_t acc, int d) {
                           if (d < 0) fail(ErrorKind::InvalidArgument, "negative dimension in shape " + shape_string(shape));
                           return acc * static_cast<std::size_t>(d);
                         });
}

/// 64-byte aligned storage. Eigen picks its vectorised code path from the
/// buffer alignment, so unaligned buffers make results depend on where the
/// allocator happened to put them.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

/// Dense row-major array, last dimension fastest. Maps are [C, H, W] and
/// convolution kernels [out, in, kh, kw].
///
/// The engine runs in float; the double instantiation exists so gradient
/// checks can use finite differences without float round-off.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {
    validate_shape();
  }

  BasicTensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    validate_shape();
    if (data_.size() != shape_volume(shape_)) {
      fail(ErrorKind::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                         " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(int c, int h, int w) noexcept { return data_[offset(c, h, w)]; }
  const T& at(int c, int h, int w) const noexcept { return data_[offset(c, h, w)]; }

  T& at(int o, int i, int kh, int kw) noexcept { return data_[offset(o, i, kh, kw)]; }
  const T& at(int o, int i, int kh, int kw) const noexcept { return data_[offset(o, i, kh, kw)]; }

  /// Channel plane of a [C, H, W] tensor.
  std::span<T> plane(int c) noexcept {
    const std::size_t n = static_cast<std::size_t>(shape_[1]) * static_cast<std::size_t>(shape_[2]);
    return {data_.data() + static_cast<std::size_t>(c) * n, n};
  }
  std::span<const T> plane(int c) const noexcept {
    const std::size_t n = static_cast<std::size_t>(shape_[1]) * static_cast<std::size_t>(shape_[2]);
    return {data_.data() + static_cast<std::size_t>(c) * n, n};
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  BasicTensor<U> cast() const {
    if (shape_.empty()) return {};
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool all_finite() const noexcept;

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_shape() const {
    for (int d : shape_) {
      if (d <= 0) fail(ErrorKind::InvalidArgument, "non-positive dimension in shape " + shape_string(shape_));
    }
  }

  std::size_t offset(int c, int h, int w) const noexcept {
    return (static_cast<std::size_t>(c) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(h)) *
               static_cast<std::size_t>(shape_[2]) +
           static_cast<std::size_t>(w);
  }
  std::size_t offset(int o, int i, int kh, int kw) const noexcept {
    return ((static_cast<std::size_t>(o) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(i)) *
                static_cast<std::size_t>(shape_[2]) +
            static_cast<std::size_t>(kh)) *
               static_cast<std::size_t>(shape_[3]) +
           static_cast<std::size_t>(kw);
  }

  Shape shape_;
  std::vector<T, AlignedAllocator<T>> data_;
};

using Tensor = BasicTensor<float>;

/// Largest absolute elementwise difference; shapes must agree.
template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace lmnet
