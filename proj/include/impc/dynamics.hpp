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

// Rigid-body quadrotor model: m r'' = -m g z_W + T z_B and
// J w' = -w x J w + tau, with the attitude carried as 3-2-1 Euler angles.
//
// State layout (12): position r, Euler angles (roll, pitch, yaw), world
// velocity, body rates. Control layout (4): collective thrust, body torques.

#include <array>
#include <cmath>
#include <string>

#include "impc/autodiff.hpp"
#include "impc/matrix.hpp"
#include "impc/rotation.hpp"

namespace impc {

inline constexpr std::size_t kStateDim = 12;
inline constexpr std::size_t kControlDim = 4;

template <class S>
using StateVec = std::array<S, kStateDim>;
template <class S>
using ControlVec = std::array<S, kControlDim>;

struct VehicleState {
  Vec3 position{};
  Vec3 attitude{};  // roll, pitch, yaw [rad]
  Vec3 velocity{};
  Vec3 body_rate{};

  StateVec<double> to_array() const;
  static VehicleState from_array(const StateVec<double>& x);
  Vec to_vec() const;
  static VehicleState from_vec(const Vec& x);

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct ControlInput {
  double thrust = 0.0;
  Vec3 torque{};

  ControlVec<double> to_array() const { return {thrust, torque[0], torque[1], torque[2]}; }
  static ControlInput from_array(const ControlVec<double>& u) {
    return {u[0], {u[1], u[2], u[3]}};
  }
  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

struct ActuatorLimits {
  double thrust_min = 0.0;
  double thrust_max = 20.0;
  double torque_max = 1.0;

  ControlInput clamp(const ControlInput& u) const;
  Vec lower() const { return Vec{thrust_min, -torque_max, -torque_max, -torque_max}; }
  Vec upper() const { return Vec{thrust_max, torque_max, torque_max, torque_max}; }
};

// Mass and diagonal inertia. Scalars are Vars when the parameters are being
// learned; gravity is a fixed constant.
template <class S>
struct VehicleParams {
  S mass = S(1.0);
  Vec3T<S> inertia{S(0.01), S(0.01), S(0.02)};
  double gravity = 9.81;
};

// Builds positive parameters from log-parameters.
template <class S>
VehicleParams<S> params_from_log(const S& log_mass, const Vec3T<S>& log_inertia, double gravity) {
  using std::exp;
  return {exp(log_mass), {exp(log_inertia[0]), exp(log_inertia[1]), exp(log_inertia[2])}, gravity};
}

// External force (world frame) and torque (body frame), applied by the plant
// only; the controller's model never sees them.
struct Wrench {
  Vec3 force{};
  Vec3 torque{};
};

std::string describe(const VehicleState& x);

// Throws GimbalLockError if the pitch reached the guard and DivergenceError
// if any entry is non-finite.
void check_state(const StateVec<double>& x);

template <class S>
StateVec<S> derivative(const StateVec<S>& x, const ControlVec<S>& u, const VehicleParams<S>& p,
                       const Wrench& ext = {}) {
  using std::cos;
  using std::sin;
  if (!(std::abs(value_of(x[4])) < kPitchGuard)) {
    throw GimbalLockError("pitch " + std::to_string(value_of(x[4])) + " rad at gimbal-lock guard");
  }
  const Vec3T<S> euler{x[3], x[4], x[5]};
  const Vec3T<S> w{x[9], x[10], x[11]};
  const S cr = cos(euler[0]), sr = sin(euler[0]);
  const S cp = cos(euler[1]), sp = sin(euler[1]);
  const S cy = cos(euler[2]), sy = sin(euler[2]);
  // Third column of the body-to-world rotation.
  const Vec3T<S> zb{cr * sp * cy + sr * sy, cr * sp * sy - sr * cy, cr * cp};
  const S thrust_per_mass = u[0] / p.mass;
  const Vec3T<S> rates = euler_rates(euler, w);
  const Vec3T<S>& j = p.inertia;
  StateVec<S> dx;
  dx[0] = x[6];
  dx[1] = x[7];
  dx[2] = x[8];
  dx[3] = rates[0];
  dx[4] = rates[1];
  dx[5] = rates[2];
  dx[6] = thrust_per_mass * zb[0] + ext.force[0] / p.mass;
  dx[7] = thrust_per_mass * zb[1] + ext.force[1] / p.mass;
  dx[8] = thrust_per_mass * zb[2] - p.gravity + ext.force[2] / p.mass;
  dx[9] = (u[1] + ext.torque[0] - (j[2] - j[1]) * w[1] * w[2]) / j[0];
  dx[10] = (u[2] + ext.torque[1] - (j[0] - j[2]) * w[2] * w[0]) / j[1];
  dx[11] = (u[3] + ext.torque[2] - (j[1] - j[0]) * w[0] * w[1]) / j[2];
  return dx;
}

template <class S>
StateVec<S> rk4(const StateVec<S>& x, const ControlVec<S>& u, const VehicleParams<S>& p,
                double dt, const Wrench& ext = {}) {
  auto axpy = [](const StateVec<S>& a, double h, const StateVec<S>& b) {
    StateVec<S> out;
    for (std::size_t i = 0; i < kStateDim; ++i) out[i] = a[i] + h * b[i];
    return out;
  };
  const StateVec<S> k1 = derivative(x, u, p, ext);
  const StateVec<S> k2 = derivative(axpy(x, 0.5 * dt, k1), u, p, ext);
  const StateVec<S> k3 = derivative(axpy(x, 0.5 * dt, k2), u, p, ext);
  const StateVec<S> k4 = derivative(axpy(x, dt, k3), u, p, ext);
  StateVec<S> out;
  for (std::size_t i = 0; i < kStateDim; ++i) {
    out[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

// One RK4 step with roll/yaw re-wrapped to (-pi, pi]. Throws DivergenceError
// on non-finite output.
VehicleState step(const VehicleState& x, const ControlInput& u, const VehicleParams<double>& p,
                  double dt, const Wrench& ext = {});
StateVec<double> step(const StateVec<double>& x, const ControlVec<double>& u,
                      const VehicleParams<double>& p, double dt, const Wrench& ext = {});

struct Linearization {
  Mat a;  // 12 x 12, d step / d x
  Mat b;  // 12 x 4,  d step / d u
};

// Jacobians of step() extracted from a tape recording of the RK4 step, one
// backward sweep per output.
Linearization linearize(const VehicleState& x, const ControlInput& u,
                        const VehicleParams<double>& p, double dt);
Linearization linearize(const StateVec<double>& x, const ControlVec<double>& u,
                        const VehicleParams<double>& p, double dt);

// ---------------------------------------------------------------------------
// Analytic Jacobians. Used where A and B must themselves be differentiable
// with respect to the vehicle parameters (S = Var).

template <class S>
struct ContinuousJacobian {
  // Row-major 12 x 16 block [df/dx, df/du].
  std::array<S, kStateDim*(kStateDim + kControlDim)> m;
  S& operator()(std::size_t r, std::size_t c) { return m[r * (kStateDim + kControlDim) + c]; }
  const S& operator()(std::size_t r, std::size_t c) const {
    return m[r * (kStateDim + kControlDim) + c];
  }
};

template <class S>
ContinuousJacobian<S> derivative_jacobian(const StateVec<S>& x, const ControlVec<S>& u,
                                          const VehicleParams<S>& p) {
  using std::cos;
  using std::sin;
  ContinuousJacobian<S> jac;
  jac.m.fill(S(0.0));
  const S cr = cos(x[3]), sr = sin(x[3]);
  const S cp = cos(x[4]), sp = sin(x[4]);
  const S cy = cos(x[5]), sy = sin(x[5]);
  const S tp = sp / cp;
  const S sec = 1.0 / cp;
  const S wx = x[9], wy = x[10], wz = x[11];

  for (int i = 0; i < 3; ++i) jac(i, 6 + i) = S(1.0);

  // Euler kinematics.
  jac(3, 3) = (cr * wy - sr * wz) * tp;
  jac(3, 4) = (sr * wy + cr * wz) * sec * sec;
  jac(4, 3) = -sr * wy - cr * wz;
  jac(5, 3) = (cr * wy - sr * wz) * sec;
  jac(5, 4) = (sr * wy + cr * wz) * tp * sec;
  jac(3, 9) = S(1.0);
  jac(3, 10) = sr * tp;
  jac(3, 11) = cr * tp;
  jac(4, 10) = cr;
  jac(4, 11) = -sr;
  jac(5, 10) = sr * sec;
  jac(5, 11) = cr * sec;

  // Translational: (T/m) z_B.
  const S tm = u[0] / p.mass;
  const Vec3T<S> zb{cr * sp * cy + sr * sy, cr * sp * sy - sr * cy, cr * cp};
  const Vec3T<S> dzb_droll{-sr * sp * cy + cr * sy, -sr * sp * sy - cr * cy, -sr * cp};
  const Vec3T<S> dzb_dpitch{cr * cp * cy, cr * cp * sy, -cr * sp};
  const Vec3T<S> dzb_dyaw{-cr * sp * sy + sr * cy, cr * sp * cy + sr * sy, S(0.0)};
  for (int i = 0; i < 3; ++i) {
    jac(6 + i, 3) = tm * dzb_droll[i];
    jac(6 + i, 4) = tm * dzb_dpitch[i];
    jac(6 + i, 5) = tm * dzb_dyaw[i];
    jac(6 + i, 12) = zb[i] / p.mass;
  }

  // Rotational: J^-1 (tau - w x J w).
  const Vec3T<S>& j = p.inertia;
  jac(9, 10) = -(j[2] - j[1]) * wz / j[0];
  jac(9, 11) = -(j[2] - j[1]) * wy / j[0];
  jac(10, 9) = -(j[0] - j[2]) * wz / j[1];
  jac(10, 11) = -(j[0] - j[2]) * wx / j[1];
  jac(11, 9) = -(j[1] - j[0]) * wy / j[2];
  jac(11, 10) = -(j[1] - j[0]) * wx / j[2];
  jac(9, 13) = 1.0 / j[0];
  jac(10, 14) = 1.0 / j[1];
  jac(11, 15) = 1.0 / j[2];
  return jac;
}

template <class S>
struct StepWithJacobian {
  StateVec<S> next;
  Matrix<S> a;  // 12 x 12
  Matrix<S> b;  // 12 x 4
};

// RK4 step and its exact Jacobians by propagating the stage tangents.
template <class S>
StepWithJacobian<S> step_with_jacobian(const StateVec<S>& x, const ControlVec<S>& u,
                                       const VehicleParams<S>& p, double dt) {
  constexpr std::size_t n = kStateDim;
  constexpr std::size_t nz = kStateDim + kControlDim;
  using Tangent = std::array<S, n * nz>;  // d(stage state)/d(x, u), row-major

  auto stage_derivative = [&](const StateVec<S>& xs, const Tangent& dxs, StateVec<S>& k,
                              Tangent& dk) {
    k = derivative(xs, u, p);
    const ContinuousJacobian<S> f = derivative_jacobian(xs, u, p);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < nz; ++c) {
        S acc = c >= n ? f(r, c) : S(0.0);
        for (std::size_t q = 0; q < n; ++q) {
          const S& frq = f(r, q);
          if (is_constant_value(frq) && value_of(frq) == 0.0) continue;
          const S& d = dxs[q * nz + c];
          if (is_constant_value(d) && value_of(d) == 0.0) continue;
          acc = acc + frq * d;
        }
        dk[r * nz + c] = acc;
      }
    }
  };
  auto advance = [&](const StateVec<S>& k, const Tangent& dk, double h, StateVec<S>& xs,
                     Tangent& dxs) {
    for (std::size_t i = 0; i < n; ++i) xs[i] = x[i] + h * k[i];
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < nz; ++c)
        dxs[r * nz + c] = (r == c ? S(1.0) : S(0.0)) + h * dk[r * nz + c];
  };

  Tangent d1;
  d1.fill(S(0.0));
  for (std::size_t i = 0; i < n; ++i) d1[i * nz + i] = S(1.0);

  StateVec<S> k1, k2, k3, k4, xs;
  Tangent dk1, dk2, dk3, dk4, dxs;
  stage_derivative(x, d1, k1, dk1);
  advance(k1, dk1, 0.5 * dt, xs, dxs);
  stage_derivative(xs, dxs, k2, dk2);
  advance(k2, dk2, 0.5 * dt, xs, dxs);
  stage_derivative(xs, dxs, k3, dk3);
  advance(k3, dk3, dt, xs, dxs);
  stage_derivative(xs, dxs, k4, dk4);

  StepWithJacobian<S> out{StateVec<S>{}, Matrix<S>(n, n), Matrix<S>(n, kControlDim)};
  for (std::size_t i = 0; i < n; ++i) {
    out.next[i] = x[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < nz; ++c) {
      const std::size_t idx = r * nz + c;
      S v = (dt / 6.0) * (dk1[idx] + 2.0 * dk2[idx] + 2.0 * dk3[idx] + dk4[idx]);
      if (c < n) {
        out.a(r, c) = (r == c ? 1.0 + v : v);
      } else {
        out.b(r, c - n) = v;
      }
    }
  }
  return out;
}

}  // namespace impc
