// Copyright 2026 The impc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Small dense row-major matrices and vectors, generic over the scalar so the
// same code runs on plain doubles and on tape Vars.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "impc/autodiff.hpp"
#include "impc/errors.hpp"

namespace impc {

inline bool is_constant_value(double) { return true; }
inline bool is_constant_value(const Var& v) { return v.is_constant(); }

namespace detail {
[[noreturn]] inline void dimension_mismatch(const char* op, std::size_t r1,
                                            std::size_t c1, std::size_t r2,
                                            std::size_t c2) {
  throw DimensionError(std::string(op) + ": " + std::to_string(r1) + "x" +
                       std::to_string(c1) + " vs " + std::to_string(r2) + "x" +
                       std::to_string(c2));
}
}  // namespace detail

template <class S>
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, S fill = S(0.0)) : data_(n, fill) {}
  Vector(std::initializer_list<S> values) : data_(values) {}
  explicit Vector(std::vector<S> values) : data_(std::move(values)) {}

  std::size_t size() const { return data_.size(); }
  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }
  S& at(std::size_t i) { return data_.at(i); }
  const S& at(std::size_t i) const { return data_.at(i); }
  std::span<S> span() { return data_; }
  std::span<const S> span() const { return data_; }
  const std::vector<S>& values() const { return data_; }
  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  Vector segment(std::size_t start, std::size_t n) const {
    if (start + n > size()) detail::dimension_mismatch("segment", start + n, 1, size(), 1);
    return Vector(std::vector<S>(data_.begin() + start, data_.begin() + start + n));
  }

 private:
  std::vector<S> data_;
};

template <class S>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, S fill = S(0.0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::initializer_list<S> values)
      : rows_(rows), cols_(cols), data_(values) {
    if (data_.size() != rows * cols) {
      detail::dimension_mismatch("Matrix(init)", rows, cols, data_.size(), 1);
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = S(1.0);
    return m;
  }
  static Matrix diagonal(const Vector<S>& d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  S& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const S& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  S& at(std::size_t r, std::size_t c) {
    if (r >= rows_ || c >= cols_) detail::dimension_mismatch("at", r, c, rows_, cols_);
    return data_[r * cols_ + c];
  }
  const S& at(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) detail::dimension_mismatch("at", r, c, rows_, cols_);
    return data_[r * cols_ + c];
  }
  std::span<const S> data() const { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    if (r0 + nr > rows_ || c0 + nc > cols_) {
      detail::dimension_mismatch("block", r0 + nr, c0 + nc, rows_, cols_);
    }
    Matrix b(nr, nc);
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t c = 0; c < nc; ++c) b(r, c) = (*this)(r0 + r, c0 + c);
    return b;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<S> data_;
};

using Vec = Vector<double>;
using Mat = Matrix<double>;

// ---------------------------------------------------------------------------
// Operators. Mixed double/Var operands promote through Var's converting
// constructor, so they are written once over S.

template <class S>
Vector<S> operator+(const Vector<S>& a, const Vector<S>& b) {
  if (a.size() != b.size()) detail::dimension_mismatch("vec+", a.size(), 1, b.size(), 1);
  Vector<S> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <class S>
Vector<S> operator-(const Vector<S>& a, const Vector<S>& b) {
  if (a.size() != b.size()) detail::dimension_mismatch("vec-", a.size(), 1, b.size(), 1);
  Vector<S> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <class S>
Vector<S> operator*(const S& s, const Vector<S>& a) {
  Vector<S> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

template <class S>
S dot(const Vector<S>& a, const Vector<S>& b) {
  if (a.size() != b.size()) detail::dimension_mismatch("dot", a.size(), 1, b.size(), 1);
  S acc(0.0);
  for (std::size_t i = 0; i < a.size(); ++i) acc = acc + a[i] * b[i];
  return acc;
}

template <class S>
Matrix<S> operator+(const Matrix<S>& a, const Matrix<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    detail::dimension_mismatch("mat+", a.rows(), a.cols(), b.rows(), b.cols());
  }
  Matrix<S> out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c) + b(r, c);
  return out;
}

template <class S>
Matrix<S> operator-(const Matrix<S>& a, const Matrix<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    detail::dimension_mismatch("mat-", a.rows(), a.cols(), b.rows(), b.cols());
  }
  Matrix<S> out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c) - b(r, c);
  return out;
}

template <class S>
Matrix<S> operator*(const Matrix<S>& a, const Matrix<S>& b) {
  if (a.cols() != b.rows()) {
    detail::dimension_mismatch("mat*", a.rows(), a.cols(), b.rows(), b.cols());
  }
  Matrix<S> out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const S& ark = a(r, k);
      if (value_of(ark) == 0.0 && is_constant_value(ark)) continue;
      for (std::size_t c = 0; c < b.cols(); ++c) out(r, c) = out(r, c) + ark * b(k, c);
    }
  }
  return out;
}

template <class S>
Vector<S> operator*(const Matrix<S>& a, const Vector<S>& x) {
  if (a.cols() != x.size()) detail::dimension_mismatch("mat*vec", a.rows(), a.cols(), x.size(), 1);
  Vector<S> out(a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    S acc(0.0);
    for (std::size_t c = 0; c < a.cols(); ++c) acc = acc + a(r, c) * x[c];
    out[r] = acc;
  }
  return out;
}

template <class S>
Matrix<S> operator*(const S& s, const Matrix<S>& a) {
  Matrix<S> out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = s * a(r, c);
  return out;
}

template <class S>
double norm_inf(const Vector<S>& a) {
  double m = 0.0;
  for (const S& v : a) m = std::max(m, std::abs(value_of(v)));
  return m;
}

template <class S>
Vector<double> values(const Vector<S>& a) {
  Vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = value_of(a[i]);
  return out;
}

template <class S>
Matrix<double> values(const Matrix<S>& a) {
  Matrix<double> out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = value_of(a(r, c));
  return out;
}

template <class To>
Vector<To> cast(const Vec& a) {
  Vector<To> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = To(a[i]);
  return out;
}

template <class To>
Matrix<To> cast(const Mat& a) {
  Matrix<To> out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = To(a(r, c));
  return out;
}

}  // namespace impc
