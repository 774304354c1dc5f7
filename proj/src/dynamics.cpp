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

#include "impc/dynamics.hpp"

#include <algorithm>
#include <cstdio>

namespace impc {

StateVec<double> VehicleState::to_array() const {
  StateVec<double> x;
  for (int i = 0; i < 3; ++i) {
    x[i] = position[i];
    x[3 + i] = attitude[i];
    x[6 + i] = velocity[i];
    x[9 + i] = body_rate[i];
  }
  return x;
}

VehicleState VehicleState::from_array(const StateVec<double>& x) {
  VehicleState s;
  for (int i = 0; i < 3; ++i) {
    s.position[i] = x[i];
    s.attitude[i] = x[3 + i];
    s.velocity[i] = x[6 + i];
    s.body_rate[i] = x[9 + i];
  }
  return s;
}

Vec VehicleState::to_vec() const {
  const StateVec<double> a = to_array();
  return Vec(std::vector<double>(a.begin(), a.end()));
}

VehicleState VehicleState::from_vec(const Vec& x) {
  if (x.size() != kStateDim) detail::dimension_mismatch("VehicleState", x.size(), 1, kStateDim, 1);
  StateVec<double> a;
  std::copy(x.begin(), x.end(), a.begin());
  return from_array(a);
}

ControlInput ActuatorLimits::clamp(const ControlInput& u) const {
  ControlInput out;
  out.thrust = std::clamp(u.thrust, thrust_min, thrust_max);
  for (int i = 0; i < 3; ++i) out.torque[i] = std::clamp(u.torque[i], -torque_max, torque_max);
  return out;
}

std::string describe(const VehicleState& x) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "r=(%.4g,%.4g,%.4g) att=(%.4g,%.4g,%.4g) v=(%.4g,%.4g,%.4g) w=(%.4g,%.4g,%.4g)",
                x.position[0], x.position[1], x.position[2], x.attitude[0], x.attitude[1],
                x.attitude[2], x.velocity[0], x.velocity[1], x.velocity[2], x.body_rate[0],
                x.body_rate[1], x.body_rate[2]);
  return buf;
}

void check_state(const StateVec<double>& x) {
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw DivergenceError("non-finite state: " + describe(VehicleState::from_array(x)));
    }
  }
  if (!(std::abs(x[4]) < kPitchGuard)) {
    throw GimbalLockError("pitch at gimbal-lock guard: " + describe(VehicleState::from_array(x)));
  }
}

StateVec<double> step(const StateVec<double>& x, const ControlVec<double>& u,
                      const VehicleParams<double>& p, double dt, const Wrench& ext) {
  StateVec<double> next = rk4(x, u, p, dt, ext);
  for (double v : next) {
    if (!std::isfinite(v)) {
      throw DivergenceError("step diverged from " + describe(VehicleState::from_array(x)));
    }
  }
  next[3] = wrap_angle(next[3]);
  next[5] = wrap_angle(next[5]);
  return next;
}

VehicleState step(const VehicleState& x, const ControlInput& u, const VehicleParams<double>& p,
                  double dt, const Wrench& ext) {
  return VehicleState::from_array(step(x.to_array(), u.to_array(), p, dt, ext));
}

Linearization linearize(const StateVec<double>& x, const ControlVec<double>& u,
                        const VehicleParams<double>& p, double dt) {
  thread_local Tape tape;
  tape.clear();
  StateVec<Var> xv;
  ControlVec<Var> uv;
  for (std::size_t i = 0; i < kStateDim; ++i) xv[i] = tape.variable(x[i]);
  for (std::size_t i = 0; i < kControlDim; ++i) uv[i] = tape.variable(u[i]);
  const VehicleParams<Var> pv{Var(p.mass), {Var(p.inertia[0]), Var(p.inertia[1]), Var(p.inertia[2])},
                              p.gravity};
  const StateVec<Var> next = rk4(xv, uv, pv, dt);

  Linearization lin{Mat(kStateDim, kStateDim), Mat(kStateDim, kControlDim)};
  thread_local std::vector<double> adjoints;
  for (std::size_t r = 0; r < kStateDim; ++r) {
    tape.backward_into(next[r], adjoints);
    // Leaves were created first, so their node ids are 0..15.
    for (std::size_t c = 0; c < kStateDim; ++c) lin.a(r, c) = adjoints[xv[c].index()];
    for (std::size_t c = 0; c < kControlDim; ++c) lin.b(r, c) = adjoints[uv[c].index()];
  }
  tape.clear();
  return lin;
}

Linearization linearize(const VehicleState& x, const ControlInput& u,
                        const VehicleParams<double>& p, double dt) {
  return linearize(x.to_array(), u.to_array(), p, dt);
}

}  // namespace impc
