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

// SO(3) and 3-2-1 (yaw-pitch-roll) Euler helpers, generic over the scalar.
// Rotation matrices are row-major std::array<S, 9> mapping body to world.

#include <array>
#include <cmath>
#include <numbers>

#include "impc/autodiff.hpp"
#include "impc/errors.hpp"

namespace impc {

template <class S>
using Vec3T = std::array<S, 3>;
using Vec3 = Vec3T<double>;
template <class S>
using Rot = std::array<S, 9>;

// Pitch magnitude at which Euler rates become singular enough to refuse.
inline constexpr double kPitchGuard = std::numbers::pi / 2.0 - 1e-3;

// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  if (a > -kPi && a <= kPi) return a;
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

template <class S>
Rot<S> rotation_from_euler(const Vec3T<S>& euler) {
  using std::cos;
  using std::sin;
  const S cr = cos(euler[0]), sr = sin(euler[0]);
  const S cp = cos(euler[1]), sp = sin(euler[1]);
  const S cy = cos(euler[2]), sy = sin(euler[2]);
  return {cp * cy, sr * sp * cy - cr * sy, cr * sp * cy + sr * sy,
          cp * sy, sr * sp * sy + cr * cy, cr * sp * sy - sr * cy,
          -sp,     sr * cp,                cr * cp};
}

template <class S>
Vec3T<S> euler_from_rotation(const Rot<S>& r) {
  using std::asin;
  using std::atan2;
  if (std::abs(value_of(r[6])) >= std::sin(kPitchGuard)) {
    throw GimbalLockError("attitude at pitch guard (R20 = " +
                          std::to_string(value_of(r[6])) + ")");
  }
  return {atan2(r[7], r[8]), -asin(r[6]), atan2(r[3], r[0])};
}

template <class S>
Rot<S> matmul(const Rot<S>& a, const Rot<S>& b) {
  Rot<S> out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      out[3 * i + j] = a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j];
  return out;
}

template <class S>
Vec3T<S> rotate(const Rot<S>& r, const Vec3T<S>& v) {
  return {r[0] * v[0] + r[1] * v[1] + r[2] * v[2], r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
          r[6] * v[0] + r[7] * v[1] + r[8] * v[2]};
}

template <class S>
Vec3T<S> rotate_transpose(const Rot<S>& r, const Vec3T<S>& v) {
  return {r[0] * v[0] + r[3] * v[1] + r[6] * v[2], r[1] * v[0] + r[4] * v[1] + r[7] * v[2],
          r[2] * v[0] + r[5] * v[1] + r[8] * v[2]};
}

template <class S>
Vec3T<S> cross(const Vec3T<S>& a, const Vec3T<S>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// Rodrigues formula; small angles use the Taylor series so the map stays
// differentiable at zero.
template <class S>
Rot<S> so3_exp(const Vec3T<S>& phi) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const S t2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2];
  S a, b;  // sin(t)/t and (1 - cos(t))/t^2
  if (value_of(t2) < 1e-6) {
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  } else {
    const S t = sqrt(t2);
    a = sin(t) / t;
    b = (1.0 - cos(t)) / t2;
  }
  const S x = phi[0], y = phi[1], z = phi[2];
  return {1.0 - b * (y * y + z * z), -a * z + b * x * y,       a * y + b * x * z,
          a * z + b * x * y,         1.0 - b * (x * x + z * z), -a * x + b * y * z,
          -a * y + b * x * z,        a * x + b * y * z,         1.0 - b * (x * x + y * y)};
}

// Euler-angle rates from body rates for the 3-2-1 sequence.
template <class S>
Vec3T<S> euler_rates(const Vec3T<S>& euler, const Vec3T<S>& w) {
  using std::cos;
  using std::sin;
  using std::tan;
  const S cr = cos(euler[0]), sr = sin(euler[0]);
  const S cp = cos(euler[1]), tp = tan(euler[1]);
  return {w[0] + sr * tp * w[1] + cr * tp * w[2], cr * w[1] - sr * w[2],
          (sr * w[1] + cr * w[2]) / cp};
}

}  // namespace impc
