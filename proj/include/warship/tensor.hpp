#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "warship/errors.hpp"

namespace warship {

struct Shape4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  std::size_t size() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);

// Dense (batch, channels, rows, cols) array, row-major. Single precision is the
// training type; double is used for gradient checks.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() : Tensor4(1, 1, 1, 1) {}
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : Tensor4(Shape4{n, c, h, w}, fill) {}
  explicit Tensor4(Shape4 shape, T fill = T(0)) : shape_(shape) {
    if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0) {
      throw ConfigError("tensor dimensions must be >= 1, got " + to_string(shape));
    }
    data_.assign(shape.size(), fill);
  }

  const Shape4& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return shape_.h * shape_.w; }

  std::size_t index(std::size_t in, std::size_t ic, std::size_t ih, std::size_t iw) const {
    return ((in * shape_.c + ic) * shape_.h + ih) * shape_.w + iw;
  }
  T& operator()(std::size_t in, std::size_t ic, std::size_t ih, std::size_t iw) {
    return data_[index(in, ic, ih, iw)];
  }
  const T& operator()(std::size_t in, std::size_t ic, std::size_t ih, std::size_t iw) const {
    return data_[index(in, ic, ih, iw)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  // Contiguous view of one sample (all channels).
  std::span<T> sample(std::size_t in) {
    return std::span<T>(data_).subspan(in * shape_.c * plane(), shape_.c * plane());
  }
  std::span<const T> sample(std::size_t in) const {
    return std::span<const T>(data_).subspan(in * shape_.c * plane(), shape_.c * plane());
  }
  // Contiguous view of one (sample, channel) plane.
  std::span<T> channel(std::size_t in, std::size_t ic) {
    return std::span<T>(data_).subspan((in * shape_.c + ic) * plane(), plane());
  }
  std::span<const T> channel(std::size_t in, std::size_t ic) const {
    return std::span<const T>(data_).subspan((in * shape_.c + ic) * plane(), plane());
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (const T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Tensor4<U> cast() const {
    Tensor4<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool operator==(const Tensor4&) const = default;

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

inline std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + ")";
}

inline void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (!(a == b)) {
    throw ConfigError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " +
                      to_string(b));
  }
}

}  // namespace warship
