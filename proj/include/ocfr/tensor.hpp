#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstddef>
#include <string>
#include <vector>

#include "ocfr/error.hpp"

namespace ocfr {

/// Batch x channels x height x width.
struct Shape4 {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(n) * c * static_cast<std::size_t>(h) * w;
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  friend bool operator==(const Shape4&, const Shape4&) = default;

  /// Rendered the way the network tables list shapes: H x W x C (batch omitted when 1).
  std::string str() const {
    std::string s = std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    return n == 1 ? s : std::to_string(n) + "@" + s;
  }
};

/// Dense NCHW tensor. Plain value type; copies are deep.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 s, T fill = T{}) : shape_(s), data_(s.count(), fill) {}
  Tensor(int n, int c, int h, int w, T fill = T{}) : Tensor(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t plane() const noexcept { return shape_.plane(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  std::size_t offset(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(int n, int c, int y, int x) noexcept { return data_[offset(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const noexcept { return data_[offset(n, c, y, x)]; }

  /// Pointer to sample `n`, channel `c` plane.
  T* plane_ptr(int n, int c) noexcept { return data_.data() + offset(n, c, 0, 0); }
  const T* plane_ptr(int n, int c) const noexcept { return data_.data() + offset(n, c, 0, 0); }
  T* sample_ptr(int n) noexcept { return plane_ptr(n, 0); }
  const T* sample_ptr(int n) const noexcept { return plane_ptr(n, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape_to(Shape4 s) {
    shape_ = s;
    data_.assign(s.count(), T{});
  }

  /// Copy of one sample as a batch-of-one tensor.
  Tensor sample(int n) const {
    Tensor out(Shape4{1, shape_.c, shape_.h, shape_.w});
    std::copy_n(sample_ptr(n), out.size(), out.data());
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

inline void require_shape(const Shape4& got, const Shape4& want, const std::string& what) {
  if (!(got == want)) throw ShapeError(what + ": expected " + want.str() + ", got " + got.str());
}

}  // namespace ocfr
