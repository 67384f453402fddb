#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "shrvq/error.hpp"

namespace shrvq {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ')';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

/// Dense row-major tensor. Feature maps are stored channel-major (C, H, W);
/// latent grids are stored position-major (H, W, D) so each D-vector is
/// contiguous.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    for (int d : shape_) {
      if (d < 0) throw ShapeError("negative tensor extent in " + shape_str(shape_));
    }
    data_.assign(shape_numel(shape_), fill);
  }
  Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("data size does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  const T& operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  T& operator()(int i, int j, int k) {
    return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  const T& operator()(int i, int j, int k) const {
    return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void set_zero() { fill(T{}); }

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    }
    Tensor out = *this;
    out.shape_ = std::move(s);
    return out;
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  Tensor& operator+=(const Tensor& o) {
    check_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    check_same(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  void check_same(const Tensor& o, const char* op) const {
    if (shape_ != o.shape_) {
      throw ShapeError(std::string("shape mismatch in ") + op + ": " + shape_str(shape_) +
                       " vs " + shape_str(o.shape_));
    }
  }

 private:
  Shape shape_;
  // Eigen's vectorized reductions split work by address alignment, so every
  // buffer starts on the same boundary to keep results reproducible.
  std::vector<T, Eigen::aligned_allocator<T>> data_;
};

template <class T>
Tensor<T> operator+(Tensor<T> a, const Tensor<T>& b) {
  a += b;
  return a;
}

template <class T>
Tensor<T> operator-(Tensor<T> a, const Tensor<T>& b) {
  a -= b;
  return a;
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// View a tensor as a rows x (size/rows) row-major matrix.
template <class T>
MatMap<T> as_matrix(Tensor<T>& t, int rows) {
  return MatMap<T>(t.data(), rows, static_cast<Eigen::Index>(t.size() / rows));
}
template <class T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, int rows) {
  return ConstMatMap<T>(t.data(), rows, static_cast<Eigen::Index>(t.size() / rows));
}

template <class T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

/// (C, H, W) -> (H, W, C).
template <class T>
Tensor<T> chw_to_hwc(const Tensor<T>& t) {
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  Tensor<T> out({h, w, c});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(y, x, ch) = t(ch, y, x);
  return out;
}

/// (H, W, C) -> (C, H, W).
template <class T>
Tensor<T> hwc_to_chw(const Tensor<T>& t) {
  const int h = t.dim(0), w = t.dim(1), c = t.dim(2);
  Tensor<T> out({c, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) out(ch, y, x) = t(y, x, ch);
  return out;
}

}  // namespace shrvq
