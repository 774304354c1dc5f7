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

// Oracles shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

#include "impc/dmpc.hpp"
#include "impc/io_net.hpp"
#include "impc/sensor_sim.hpp"
#include "impc/trainer.hpp"

namespace impc::testing {

inline constexpr double kDeg = std::numbers::pi / 180.0;

inline StateVec<double> random_near_hover(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  StateVec<double> x{};
  for (int i = 0; i < 3; ++i) x[i] = u(rng);
  for (int i = 3; i < 6; ++i) x[i] = 0.3 * u(rng);
  for (int i = 6; i < 9; ++i) x[i] = 0.5 * u(rng);
  for (int i = 9; i < 12; ++i) x[i] = 0.5 * u(rng);
  return x;
}

inline ControlVec<double> random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {9.81 + 2.0 * u(rng), 0.05 * u(rng), 0.05 * u(rng), 0.05 * u(rng)};
}

// Central differences of one RK4 step.
inline Linearization finite_difference_jacobian(const StateVec<double>& x, const ControlVec<double>& u,
                                                const VehicleParams<double>& p, double dt, double h) {
  Linearization fd{Mat(kStateDim, kStateDim), Mat(kStateDim, kControlDim)};
  for (std::size_t c = 0; c < kStateDim + kControlDim; ++c) {
    auto xp = x, xm = x;
    auto up = u, um = u;
    if (c < kStateDim) {
      xp[c] += h;
      xm[c] -= h;
    } else {
      up[c - kStateDim] += h;
      um[c - kStateDim] -= h;
    }
    const auto fp = rk4(xp, up, p, dt);
    const auto fm = rk4(xm, um, p, dt);
    for (std::size_t r = 0; r < kStateDim; ++r) {
      const double d = (fp[r] - fm[r]) / (2.0 * h);
      if (c < kStateDim) fd.a(r, c) = d; else fd.b(r, c - kStateDim) = d;
    }
  }
  return fd;
}

inline std::shared_ptr<QuadrotorModel> quad(double mass = 1.0) {
  VehicleParams<double> p;
  p.mass = mass;
  return std::make_shared<QuadrotorModel>(p, 0.02);
}

inline Vec tilted(double roll, double pitch, double yaw) {
  Vec x(kStateDim);
  x[3] = roll;
  x[4] = pitch;
  x[5] = yaw;
  return x;
}

inline MpcProblem lq_problem(std::shared_ptr<const DynamicsModel> model, int n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const std::size_t nx = model->state_dim(), nu = model->control_dim();
  Vector<Var> q(nx + nu), p(nx + nu);
  for (std::size_t i = 0; i < nx + nu; ++i) {
    q[i] = u(rng);
    p[i] = 0.1 * (u(rng) - 1.25);
  }
  Vec xr(nx), ur(nu);
  xr[0] = 1.0;
  return MpcProblem::tracking(model, n, q, p, xr, ur, Vec(nu, -bound), Vec(nu, bound));
}

inline SolverOptions tight() {
  SolverOptions o;
  o.tolerance = 1e-12;
  o.max_iterations = 200;
  return o;
}

// LQ problem whose Q, p and one entry of B are tape Vars.
struct TapedLq {
  std::unique_ptr<Tape> tape = std::make_unique<Tape>();
  std::vector<Var> theta;
  MpcProblem prob;
};

inline TapedLq taped_lq(std::mt19937_64& rng, double bound) {
  TapedLq t;
  LinearModel base = double_integrator(2, 0.1);
  Matrix<Var> b = base.b();
  b(2, 0) = t.tape->variable(b(2, 0).value() * 1.1);
  t.theta.push_back(b(2, 0));
  auto model = std::make_shared<LinearModel>(base.a(), b);
  MpcProblem plain = lq_problem(model, 10, bound, rng);
  for (std::size_t i = 0; i < plain.q.size(); ++i) {
    plain.q[i] = t.tape->variable(plain.q[i].value());
    plain.p[i] = t.tape->variable(plain.p[i].value());
    t.theta.push_back(plain.q[i]);
    t.theta.push_back(plain.p[i]);
  }
  t.prob = plain;
  return t;
}

// Worst |fixed-point - KKT| / max(1, |KKT|) over random LQ problems with
// and without active bounds.
inline double fixed_point_vs_kkt(int seeds) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < static_cast<std::uint64_t>(seeds); ++seed) {
    std::mt19937_64 rng(seed);
    for (double bound : {100.0, 0.5}) {
      TapedLq t = taped_lq(rng, bound);
      const Vec x0{1.5, -2.0, 0.3, 0.2};
      const auto sol = ilqr_solve(t.prob, x0, tight());
      if (!sol.converged) return std::numeric_limits<double>::infinity();
      Vec w(trajectory_size(t.prob));
      std::normal_distribution<double> n(0.0, 1.0);
      for (double& v : w) v = n(rng);
      const ActiveBounds ab = active_bounds(t.prob, sol);
      const auto qp = solve_lq_kkt(t.prob, x0, &ab);
      const Gradient g_fp = backward_fixed_point(t.prob, sol, w);
      const Gradient g_kkt = kkt_gradient(t.prob, x0, qp, w, &ab);
      for (const Var& th : t.theta) {
        worst = std::max(worst, std::abs(g_fp[th] - g_kkt[th]) / std::max(1.0, std::abs(g_kkt[th])));
      }
    }
  }
  return worst;
}

// d(w' mu*)/d(log m, log J) through the full solver, quadrotor, N = 5.
struct QuadGradientCheck {
  double max_rel = 0.0;
  int checked = 0;
};

inline QuadGradientCheck quad_fd_check(int seeds, bool second_order) {
  QuadGradientCheck out;
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(100 + seed);
    std::uniform_real_distribution<double> ang(-8 * kDeg, 8 * kDeg), rate(-0.2, 0.2);
    std::normal_distribution<double> n(0.0, 1.0);
    Vec x0 = tilted(ang(rng), ang(rng), ang(rng));
    for (int i = 9; i < 12; ++i) x0[i] = rate(rng);
    MpcSettings s;
    s.horizon = 5;
    const double base_lm = std::log(1.1);
    const Vec3 base_lj{std::log(0.012), std::log(0.009), std::log(0.021)};
    auto solve = [&](double lm, const Vec3& lj) {
      auto model = std::make_shared<QuadrotorModel>(params_from_log(lm, lj, 9.81), 0.02);
      auto prob = attitude_problem(model, s, x0, 1.1 * 9.81);
      return std::make_pair(prob, ilqr_solve(prob, x0, tight()));
    };
    Tape tape;
    const Var lm = tape.variable(base_lm);
    const Vec3T<Var> lj{tape.variable(base_lj[0]), tape.variable(base_lj[1]), tape.variable(base_lj[2])};
    auto model = std::make_shared<QuadrotorModel>(params_from_log<Var>(lm, lj, 9.81), 0.02);
    const auto prob = attitude_problem(model, s, x0, 1.1 * 9.81);
    const auto sol = ilqr_solve(prob, x0, tight());
    bool interior = sol.converged;
    for (const auto& row : sol.active)
      for (bool a : row) interior &= !a;
    if (!interior) continue;
    Vec w(trajectory_size(prob));
    for (double& v : w) v = n(rng);
    FixedPointOptions fpo;
    fpo.second_order = second_order;
    const Gradient g = backward_fixed_point(prob, sol, w, fpo);
    // Larger steps keep the solver's convergence floor out of the difference.
    const double h = 1e-3;
    for (int j = 0; j < 4; ++j) {
      double lmp = base_lm, lmm = base_lm;
      Vec3 ljp = base_lj, ljm = base_lj;
      if (j == 0) {
        lmp += h;
        lmm -= h;
      } else {
        ljp[j - 1] += h;
        ljm[j - 1] -= h;
      }
      const auto [pp, sp] = solve(lmp, ljp);
      const auto [pm, sm] = solve(lmm, ljm);
      const double fd = (dot(w, flatten(pp, sp)) - dot(w, flatten(pm, sm))) / (2 * h);
      const double tape_g = j == 0 ? g[lm] : g[lj[j - 1]];
      out.max_rel = std::max(out.max_rel, std::abs(tape_g - fd) / std::max(std::abs(fd), 1e-3));
    }
    ++out.checked;
  }
  return out;
}

inline std::vector<CorrectedSample<double>> constant_rate(const Vec3& w, double t0, int n, double h) {
  std::vector<CorrectedSample<double>> out;
  for (int i = 0; i < n; ++i) out.push_back({t0 + h * (i + 1), w, {0.0, 0.0, 9.81}});
  return out;
}

// Noise-free plant under a time-varying torque program; integrating its gyro
// stream reproduces the true attitude.
inline double round_trip_error(double seconds, double window) {
  PlantConfig cfg;
  cfg.noise.control_sigma = 0.0;
  cfg.noise.attitude_sigma = 0.0;
  VehicleState x0;
  x0.attitude = {0.05, -0.08, 0.3};
  PlantSimulator plant(cfg, NoiseModel::noise_free(), x0, 1);
  const ImuSample first = plant.current_sample();
  double worst = 0.0;
  double t_anchor = 0.0;
  Preintegrator<double> pre(0.0, x0.attitude);
  pre.seed_history(first.gyro);
  const int steps = static_cast<int>(std::llround(seconds / 0.02));
  for (int k = 0; k < steps; ++k) {
    const double t = k * 0.02;
    const ControlInput u{9.81, {0.02 * std::sin(5.0 * t), 0.015 * std::cos(4.0 * t), 0.01 * std::sin(3.0 * t)}};
    const auto samples = plant.advance(u, 0.02);
    const auto est = pre.integrate(passthrough(samples));
    const Vec3& truth = plant.state().attitude;
    for (int i = 0; i < 3; ++i) worst = std::max(worst, std::abs(wrap_angle(est.euler[i] - truth[i])));
    if (window > 0.0 && plant.time() - t_anchor >= window - 1e-12) {
      // Re-anchor on the truth, as the per-step estimator does with x_k^I.
      const Preintegrator<double> kept = pre;
      pre = Preintegrator<double>(plant.time(), truth);
      for (const Vec3& h : kept.history()) pre.seed_history(h);
      t_anchor = plant.time();
    }
  }
  return worst;
}

struct DetachmentCheck {
  double value_gap = 0.0;     // |U(plain) - U(detached)|
  double detached_gap = 0.0;  // max |grad(plain) - grad(detached)|
  double kept_gap = 0.0;      // max |grad(plain) - grad(kept on tape)|
  double scale = 0.0;         // max |grad(plain)|
};

// Builds the per-step loss three ways: x_k^I from plain doubles, from an
// on-tape denoiser then detached, and from an on-tape denoiser left attached.
inline DetachmentCheck detachment_check(std::uint64_t seed) {
  const MlpConfig cfg;
  MlpWeights weights = MlpWeights::initialize(cfg, 5);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (double& v : weights.layers().back().weight) v = u(rng);
  for (double& v : weights.layers().back().bias) v = u(rng);
  std::normal_distribution<double> n(0.0, 0.3);
  auto window = [&](double t0) {
    std::vector<ImuSample> w;
    for (int i = 0; i < cfg.window; ++i) {
      ImuSample s;
      s.t = t0 + 0.005 * (i + 1);
      for (int k = 0; k < 3; ++k) {
        s.gyro[k] = n(rng);
        s.accel[k] = n(rng);
      }
      s.accel[2] += 9.81;
      w.push_back(s);
    }
    return w;
  };
  const std::vector<ImuSample> prev = window(0.0);
  const std::vector<ImuSample> next = window(0.02);
  VehicleState truth;
  truth.position = {0.1, -0.2, 1.0};
  truth.velocity = {0.3, 0.0, -0.1};
  const Vec3 euler0{0.1, -0.05, 0.2};
  std::vector<Vec3> acc(next.size(), Vec3{0.1, 0.2, 0.0});

  struct Out {
    std::vector<double> grad;
    double value;
  };
  auto run = [&](int mode) {  // 0 plain doubles, 1 on tape + detach, 2 on tape kept
    Tape tape;
    const BoundMlp bound = BoundMlp::bind(tape, weights);
    StateVec<Var> xk;
    Preintegrator<Var> pre_k;
    if (mode == 0) {
      Preintegrator<double> pre(0.0, euler0);
      const auto c = denoise(prev, weights, cfg);
      const auto est = pre.integrate(c);
      const VehicleState s = estimate_state(est.euler, c.back().gyro, truth);
      for (std::size_t i = 0; i < kStateDim; ++i) xk[i] = s.to_array()[i];
      pre_k = Preintegrator<Var>::from(pre);
    } else {
      Preintegrator<Var> pre(0.0, {euler0[0], euler0[1], euler0[2]});
      const auto c = denoise(prev, bound, cfg);
      const auto est = pre.integrate(c);
      xk = estimate_state<Var>(est.euler, c.back().gyro, truth);
      if (mode == 1) {
        for (Var& v : xk) v = detach(v);
        pre_k = Preintegrator<Var>::from(pre.detached());
      } else {
        pre_k = pre;
      }
    }
    const Var log_m = tape.variable(0.1);
    const VehicleParams<Var> p{exp(log_m), {0.012, 0.011, 0.019}, 9.81};
    const ControlVec<Var> uk{10.5, 0.01, -0.02, 0.003};
    StepObservation obs{denoise(next, bound, cfg), truth, acc};
    const Var loss = step_upper_loss(xk, uk, p, pre_k, obs, 0.02, {});
    const Gradient g = tape.backward(loss);
    Out o{bound.gradient(g), loss.value()};
    o.grad.push_back(g[log_m]);
    return o;
  };
  const Out plain = run(0), detached = run(1), kept = run(2);
  DetachmentCheck c;
  c.value_gap = std::abs(plain.value - detached.value);
  for (std::size_t i = 0; i < plain.grad.size(); ++i) {
    c.detached_gap = std::max(c.detached_gap, std::abs(plain.grad[i] - detached.grad[i]));
    c.kept_gap = std::max(c.kept_gap, std::abs(plain.grad[i] - kept.grad[i]));
    c.scale = std::max(c.scale, std::abs(plain.grad[i]));
  }
  return c;
}

}  // namespace impc::testing
