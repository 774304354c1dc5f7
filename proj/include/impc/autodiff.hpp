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

// Reverse-mode automatic differentiation.
//
// A Tape is an append-only record of elementary operations. Each node stores
// the indices of its parents and the local partial derivative with respect to
// each of them. Nodes are appended in evaluation order, so construction order
// is a topological order and the backward sweep simply walks the tape in
// reverse.
//
// Var is a value plus an optional handle into a Tape. A Var without a handle
// is a constant: it never appears as a parent and always has zero adjoint.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "impc/errors.hpp"

namespace impc {

class Tape;

enum class OpKind : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kSin,
  kCos,
  kTan,
  kExp,
  kLog,
  kSqrt,
  kTanh,
  kAtan2,
  kAsin,
  kPow,
  kNorm,
  kCustom,
};

class Var {
 public:
  Var() = default;
  // Constants convert implicitly so generic code can write S(0.0) or mix
  // doubles into expressions.
  Var(double value) : value_(value) {}  // NOLINT(google-explicit-constructor)

  double value() const { return value_; }
  bool is_constant() const { return tape_ == nullptr; }
  Tape* tape() const { return tape_; }
  std::int32_t index() const { return index_; }

 private:
  friend class Tape;
  Var(double value, Tape* tape, std::int32_t index)
      : value_(value), tape_(tape), index_(index) {}

  double value_ = 0.0;
  Tape* tape_ = nullptr;
  std::int32_t index_ = -1;
};

// Adjoints produced by one backward sweep.
class Gradient {
 public:
  Gradient() = default;
  Gradient(const Tape* tape, std::vector<double> adjoints)
      : tape_(tape), adjoints_(std::move(adjoints)) {}

  // Adjoint of v; zero for constants and for an empty gradient (a seed that
  // did not depend on any Var). Throws for Vars from a different tape.
  double operator[](const Var& v) const;
  double at_node(std::int32_t index) const { return adjoints_.at(index); }
  std::span<const double> adjoints() const { return adjoints_; }

 private:
  const Tape* tape_ = nullptr;
  std::vector<double> adjoints_;
};

class Tape {
 public:
  Tape() { offsets_.push_back(0); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // New independent variable.
  Var variable(double value) {
    kinds_.push_back(OpKind::kLeaf);
    offsets_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return Var(value, this, static_cast<std::int32_t>(kinds_.size() - 1));
  }

  // General n-ary record. Partials are d(output)/d(input_i). Constant inputs
  // are dropped. If every input is constant the result is a constant.
  Var record(OpKind kind, double value, std::span<const Var> inputs,
             std::span<const double> partials);

  Var record1(OpKind kind, double value, const Var& a, double da) {
    if (a.tape_ == nullptr) return Var(value);
    check_owner(a);
    push_node(kind);
    push_parent(a.index_, da);
    return seal(value);
  }

  Var record2(OpKind kind, double value, const Var& a, double da, const Var& b,
              double db) {
    if (a.tape_ == nullptr) return record1(kind, value, b, db);
    if (b.tape_ == nullptr) return record1(kind, value, a, da);
    check_owner(a);
    check_owner(b);
    push_node(kind);
    push_parent(a.index_, da);
    push_parent(b.index_, db);
    return seal(value);
  }

  std::size_t size() const { return kinds_.size(); }
  OpKind kind(std::int32_t index) const { return kinds_.at(index); }

  // Drops every node. Vars recorded earlier must not be used afterwards.
  void clear();

  Gradient backward(const Var& seed) const;

  // Backward sweep into a caller-owned buffer, reused across calls when many
  // seeds are swept on the same tape (Jacobian extraction).
  void backward_into(const Var& seed, std::vector<double>& adjoints) const;

 private:
  void check_owner(const Var& v) const {
    if (v.tape_ != this) throw TapeError("Var belongs to a different tape");
  }
  void push_node(OpKind kind) { kinds_.push_back(kind); }
  void push_parent(std::int32_t parent, double partial) {
    parents_.push_back(parent);
    partials_.push_back(partial);
  }
  Var seal(double value) {
    offsets_.push_back(static_cast<std::uint32_t>(parents_.size()));
    return Var(value, this, static_cast<std::int32_t>(kinds_.size() - 1));
  }

  std::vector<OpKind> kinds_;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::int32_t> parents_;
  std::vector<double> partials_;
};

// Free-function form of Tape::record. All non-constant inputs must share one
// tape; the result lives on that tape.
Var tape_record(OpKind kind, double value, std::span<const Var> inputs,
                std::span<const double> partials);

// Backward sweep from seed on the seed's own tape.
Gradient backward(const Tape& tape, const Var& seed);

// Value copy with no tape history.
inline Var detach(const Var& v) { return Var(v.value()); }

inline double value_of(double v) { return v; }
inline double value_of(const Var& v) { return v.value(); }

// ---------------------------------------------------------------------------
// Arithmetic. Multiplication by an exact constant zero short-circuits to a
// constant so sparse Jacobian products do not bloat the tape.

inline Var operator+(const Var& a, const Var& b) {
  if (a.is_constant() && b.is_constant()) return Var(a.value() + b.value());
  Tape* t = a.is_constant() ? b.tape() : a.tape();
  return t->record2(OpKind::kAdd, a.value() + b.value(), a, 1.0, b, 1.0);
}
inline Var operator+(const Var& a, double b) {
  if (b == 0.0) return a;
  return a.is_constant() ? Var(a.value() + b)
                         : a.tape()->record1(OpKind::kAdd, a.value() + b, a, 1.0);
}
inline Var operator+(double a, const Var& b) { return b + a; }

inline Var operator-(const Var& a) {
  return a.is_constant() ? Var(-a.value())
                         : a.tape()->record1(OpKind::kNeg, -a.value(), a, -1.0);
}
inline Var operator-(const Var& a, const Var& b) {
  if (a.is_constant() && b.is_constant()) return Var(a.value() - b.value());
  Tape* t = a.is_constant() ? b.tape() : a.tape();
  return t->record2(OpKind::kSub, a.value() - b.value(), a, 1.0, b, -1.0);
}
inline Var operator-(const Var& a, double b) { return a + (-b); }
inline Var operator-(double a, const Var& b) {
  return b.is_constant() ? Var(a - b.value())
                         : b.tape()->record1(OpKind::kSub, a - b.value(), b, -1.0);
}

inline Var operator*(const Var& a, const Var& b) {
  if (a.is_constant()) {
    if (a.value() == 0.0) return Var(0.0);
    if (b.is_constant()) return Var(a.value() * b.value());
    return b.tape()->record1(OpKind::kMul, a.value() * b.value(), b, a.value());
  }
  if (b.is_constant()) {
    if (b.value() == 0.0) return Var(0.0);
    return a.tape()->record1(OpKind::kMul, a.value() * b.value(), a, b.value());
  }
  return a.tape()->record2(OpKind::kMul, a.value() * b.value(), a, b.value(), b,
                           a.value());
}
inline Var operator*(const Var& a, double b) { return a * Var(b); }
inline Var operator*(double a, const Var& b) { return Var(a) * b; }

inline Var operator/(const Var& a, const Var& b) {
  const double q = a.value() / b.value();
  if (a.is_constant() && b.is_constant()) return Var(q);
  if (a.is_constant() && a.value() == 0.0) return Var(0.0);
  Tape* t = a.is_constant() ? b.tape() : a.tape();
  return t->record2(OpKind::kDiv, q, a, 1.0 / b.value(), b, -q / b.value());
}
inline Var operator/(const Var& a, double b) { return a * (1.0 / b); }
inline Var operator/(double a, const Var& b) { return Var(a) / b; }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

// Comparisons look at values only; they exist for pivoting and branching.
inline bool operator<(const Var& a, const Var& b) { return a.value() < b.value(); }
inline bool operator>(const Var& a, const Var& b) { return a.value() > b.value(); }
inline bool operator<=(const Var& a, const Var& b) { return a.value() <= b.value(); }
inline bool operator>=(const Var& a, const Var& b) { return a.value() >= b.value(); }

// ---------------------------------------------------------------------------
// Elementary functions, found by ADL from generic code that also does
// `using std::sin;` etc.

inline Var unary(OpKind kind, const Var& a, double value, double partial) {
  return a.is_constant() ? Var(value) : a.tape()->record1(kind, value, a, partial);
}

inline Var sin(const Var& a) {
  return unary(OpKind::kSin, a, std::sin(a.value()), std::cos(a.value()));
}
inline Var cos(const Var& a) {
  return unary(OpKind::kCos, a, std::cos(a.value()), -std::sin(a.value()));
}
inline Var tan(const Var& a) {
  const double t = std::tan(a.value());
  return unary(OpKind::kTan, a, t, 1.0 + t * t);
}
inline Var exp(const Var& a) {
  const double e = std::exp(a.value());
  return unary(OpKind::kExp, a, e, e);
}
inline Var log(const Var& a) {
  return unary(OpKind::kLog, a, std::log(a.value()), 1.0 / a.value());
}
inline Var sqrt(const Var& a) {
  const double s = std::sqrt(a.value());
  return unary(OpKind::kSqrt, a, s, 0.5 / s);
}
inline Var tanh(const Var& a) {
  const double t = std::tanh(a.value());
  return unary(OpKind::kTanh, a, t, 1.0 - t * t);
}
inline Var asin(const Var& a) {
  const double x = a.value();
  return unary(OpKind::kAsin, a, std::asin(x), 1.0 / std::sqrt(1.0 - x * x));
}
inline Var pow(const Var& a, double p) {
  const double v = std::pow(a.value(), p);
  return unary(OpKind::kPow, a, v, p * std::pow(a.value(), p - 1.0));
}
inline Var atan2(const Var& y, const Var& x) {
  const double yv = y.value();
  const double xv = x.value();
  const double r2 = xv * xv + yv * yv;
  const double v = std::atan2(yv, xv);
  if (y.is_constant() && x.is_constant()) return Var(v);
  Tape* t = y.is_constant() ? x.tape() : y.tape();
  return t->record2(OpKind::kAtan2, v, y, xv / r2, x, -yv / r2);
}

// sqrt(sum of squares) with a zero (sub)gradient at the origin.
Var norm(std::span<const Var> xs);

}  // namespace impc
