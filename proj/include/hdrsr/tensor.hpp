#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hdrsr/error.hpp"

namespace hdrsr {

/// Four-dimensional extent. Activations use (batch, height, width, channels);
/// convolution kernels reuse the same slots as (kh, kw, in, out).
struct Shape {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  std::size_t count() const noexcept { return n * h * w * c; }
  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
           std::to_string(c) + ")";
  }
};

/// Dense NHWC array.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), values_(shape.count(), fill) {}
  Tensor(Shape shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.count()) {
      throw ShapeError("tensor value count " + std::to_string(values_.size()) + " does not match shape " +
                       shape_.str());
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::vector<T>& storage() noexcept { return values_; }
  const std::vector<T>& storage() const noexcept { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::size_t offset(std::size_t n, std::size_t y, std::size_t x, std::size_t c = 0) const noexcept {
    return ((n * shape_.h + y) * shape_.w + x) * shape_.c + c;
  }
  T& at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) { return values_[offset(n, y, x, c)]; }
  const T& at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const {
    return values_[offset(n, y, x, c)];
  }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<T> values_;
};

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.size() != b.size()) throw ShapeError("dot of tensors with different sizes");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

template <typename U, typename T>
Tensor<U> tensor_cast(const Tensor<T>& t) {
  std::vector<U> v(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) v[i] = static_cast<U>(t[i]);
  return Tensor<U>(t.shape(), std::move(v));
}

/// In-place a += b.
template <typename T>
void accumulate(Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("accumulate shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace hdrsr
