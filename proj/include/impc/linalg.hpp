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

#include <cmath>
#include <utility>

#include "impc/matrix.hpp"

namespace impc {

inline constexpr double kSingularPivot = 1e-12;

// Solves A x = b by LU with partial pivoting. Pivot selection compares values,
// so for Var scalars the elimination is recorded on the tape and x is
// differentiable with respect to A and b.
template <class S>
Vector<S> solve_linear(Matrix<S> a, Vector<S> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n) detail::dimension_mismatch("solve_linear(A)", a.rows(), a.cols(), n, n);
  if (b.size() != n) detail::dimension_mismatch("solve_linear(b)", n, n, b.size(), 1);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(value_of(a(k, k)));
    for (std::size_t r = k + 1; r < n; ++r) {
      const double v = std::abs(value_of(a(r, k)));
      if (v > best) {
        best = v;
        p = r;
      }
    }
    if (!(best >= kSingularPivot)) throw SingularMatrixError(k, best);
    if (p != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(p, c));
      std::swap(b[k], b[p]);
    }
    const S pivot = a(k, k);
    for (std::size_t r = k + 1; r < n; ++r) {
      if (value_of(a(r, k)) == 0.0 && is_constant_value(a(r, k))) continue;
      const S f = a(r, k) / pivot;
      for (std::size_t c = k + 1; c < n; ++c) a(r, c) = a(r, c) - f * a(k, c);
      b[r] = b[r] - f * b[k];
    }
  }
  Vector<S> x(n);
  for (std::size_t i = n; i-- > 0;) {
    S acc = b[i];
    for (std::size_t c = i + 1; c < n; ++c) acc = acc - a(i, c) * x[c];
    x[i] = acc / a(i, i);
  }
  return x;
}

// Solves A X = B with one factorization shared by every column of B.
template <class S>
Matrix<S> solve_linear(Matrix<S> a, Matrix<S> b) {
  const std::size_t n = a.rows();
  const std::size_t m = b.cols();
  if (a.cols() != n) detail::dimension_mismatch("solve_linear(A)", a.rows(), a.cols(), n, n);
  if (b.rows() != n) detail::dimension_mismatch("solve_linear(B)", n, n, b.rows(), m);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(value_of(a(k, k)));
    for (std::size_t r = k + 1; r < n; ++r) {
      const double v = std::abs(value_of(a(r, k)));
      if (v > best) {
        best = v;
        p = r;
      }
    }
    if (!(best >= kSingularPivot)) throw SingularMatrixError(k, best);
    if (p != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(p, c));
      for (std::size_t c = 0; c < m; ++c) std::swap(b(k, c), b(p, c));
    }
    const S pivot = a(k, k);
    for (std::size_t r = k + 1; r < n; ++r) {
      if (value_of(a(r, k)) == 0.0 && is_constant_value(a(r, k))) continue;
      const S f = a(r, k) / pivot;
      for (std::size_t c = k + 1; c < n; ++c) a(r, c) = a(r, c) - f * a(k, c);
      for (std::size_t c = 0; c < m; ++c) b(r, c) = b(r, c) - f * b(k, c);
    }
  }
  Matrix<S> x(n, m);
  for (std::size_t col = 0; col < m; ++col) {
    for (std::size_t i = n; i-- > 0;) {
      S acc = b(i, col);
      for (std::size_t c = i + 1; c < n; ++c) acc = acc - a(i, c) * x(c, col);
      x(i, col) = acc / a(i, i);
    }
  }
  return x;
}

}  // namespace impc
