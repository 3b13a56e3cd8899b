#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "trisim/common.hpp"

namespace trisim {

// Dense rank-3 array, row-major in (h, l, d) order. The universal carrier for
// semantic tensors: h = block axis, l = position axis, d = feature axis.
template <typename T>
struct Tensor3 {
  int h = 0, l = 0, d = 0;
  std::vector<T> data;

  Tensor3() = default;
  Tensor3(int h_, int l_, int d_, T fill = T(0))
      : h(h_), l(l_), d(d_), data(static_cast<std::size_t>(h_) * l_ * d_, fill) {
    if (h_ <= 0 || l_ <= 0 || d_ <= 0) throw ShapeError("Tensor3: dims must be positive");
  }

  std::size_t size() const { return data.size(); }

  T& at(int i, int j, int k) { return data[(static_cast<std::size_t>(i) * l + j) * d + k]; }
  const T& at(int i, int j, int k) const {
    return data[(static_cast<std::size_t>(i) * l + j) * d + k];
  }

  T* row(int i, int j) { return data.data() + (static_cast<std::size_t>(i) * l + j) * d; }
  const T* row(int i, int j) const {
    return data.data() + (static_cast<std::size_t>(i) * l + j) * d;
  }

  bool same_shape(const Tensor3& o) const { return h == o.h && l == o.l && d == o.d; }

  std::string shape_str() const {
    return std::to_string(h) + "x" + std::to_string(l) + "x" + std::to_string(d);
  }
};

// Dense matrix, row-major.
template <typename T>
struct Matrix {
  int rows = 0, cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c, T fill = T(0))
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
    if (r <= 0 || c <= 0) throw ShapeError("Matrix: dims must be positive");
  }

  std::size_t size() const { return data.size(); }

  T& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  const T& at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

  T* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
  const T* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// (h, l, d) row-major and (N, D) row-major with N = h*l share a layout, so
// flatten/unflatten are plain copies.
template <typename T>
Matrix<T> flatten(const Tensor3<T>& t) {
  Matrix<T> m(t.h * t.l, t.d);
  m.data = t.data;
  return m;
}

template <typename T>
Tensor3<T> unflatten(const Matrix<T>& m, int h, int l) {
  if (m.rows != h * l) throw ShapeError("unflatten: rows != h*l");
  Tensor3<T> t(h, l, m.cols);
  t.data = m.data;
  return t;
}

template <typename T>
bool all_finite(const std::vector<T>& v) {
  for (T x : v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

}  // namespace trisim
