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

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "impc/dmpc.hpp"
#include "../support/oracles.hpp"

namespace impc {
namespace {

using namespace impc::testing;

TEST(IlqrSolve, HoverIsOptimalAtStart) {
  auto model = quad();
  const MpcSettings s;
  const Vec x0(kStateDim);
  const auto prob = attitude_problem(model, s, x0, 9.81);
  const auto sol = ilqr_solve(prob, x0);
  EXPECT_TRUE(sol.converged);
  EXPECT_LE(sol.iterations, 1);
  for (const Vec& u : sol.u) {
    EXPECT_NEAR(u[0], 9.81, 1e-9);
    for (int i = 1; i < 4; ++i) EXPECT_NEAR(u[i], 0.0, 1e-9);
  }
}

TEST(IlqrSolve, MatchesDenseQpOnDoubleIntegrator) {
  std::mt19937_64 rng(1);
  auto model = std::make_shared<LinearModel>(double_integrator(3, 0.1));
  const auto prob = lq_problem(model, 10, 100.0, rng);
  const Vec x0{0.3, -0.2, 0.5, 0.0, 0.1, -0.4};
  const auto sol = ilqr_solve(prob, x0, tight());
  ASSERT_TRUE(sol.converged);
  const auto qp = solve_lq_kkt(prob, x0);
  EXPECT_LE(norm_inf(flatten(prob, sol) - qp.mu), 1e-8);
}

TEST(IlqrSolve, MatchesDenseQpWithActiveBounds) {
  std::mt19937_64 rng(2);
  auto model = std::make_shared<LinearModel>(double_integrator(2, 0.1));
  const auto prob = lq_problem(model, 8, 0.4, rng);
  const Vec x0{2.0, -1.5, 0.0, 0.0};
  const auto sol = ilqr_solve(prob, x0, tight());
  ASSERT_TRUE(sol.converged);
  const ActiveBounds ab = active_bounds(prob, sol);
  int n_active = 0;
  for (const auto& row : ab) n_active += std::count_if(row.begin(), row.end(), [](int v) { return v != 0; });
  EXPECT_GT(n_active, 0);
  const auto qp = solve_lq_kkt(prob, x0, &ab);
  EXPECT_LE(norm_inf(flatten(prob, sol) - qp.mu), 1e-8);
  // Bound multipliers have the sign of a true KKT point.
  const std::size_t offset = prob.nx() * prob.horizon;
  std::size_t m = 0;
  for (int k = 0; k + 1 < prob.horizon; ++k)
    for (std::size_t j = 0; j < prob.nu(); ++j)
      if (ab[k][j] != 0) EXPECT_GE(ab[k][j] * qp.lambda[offset + m++], -1e-9);
}

TEST(IlqrSolve, TrajectoryReplaysThroughStep) {
  auto model = quad();
  const MpcSettings s;
  const Vec x0 = tilted(15 * kDeg, -10 * kDeg, 5 * kDeg);
  const auto sol = ilqr_solve(attitude_problem(model, s, x0, 9.81), x0);
  Vec x = x0;
  for (std::size_t k = 0; k < sol.u.size(); ++k) {
    x = model->step(x, sol.u[k]);
    EXPECT_LE(norm_inf(x - sol.x[k + 1]), 1e-12);
  }
}

TEST(IlqrSolve, AcceptedCostNeverIncreases) {
  auto model = quad();
  const MpcSettings s;
  const Vec x0 = tilted(20 * kDeg, 20 * kDeg, 20 * kDeg);
  const auto sol = ilqr_solve(attitude_problem(model, s, x0, 9.81), x0);
  EXPECT_TRUE(sol.converged);
  for (std::size_t i = 1; i < sol.trace.size(); ++i) EXPECT_LE(sol.trace[i].cost, sol.trace[i - 1].cost);
}

TEST(IlqrSolve, ControlsRespectBounds) {
  auto model = quad();
  MpcSettings s;
  s.limits.torque_max = 0.05;
  const Vec x0 = tilted(20 * kDeg, -20 * kDeg, 0.0);
  const auto prob = attitude_problem(model, s, x0, 9.81);
  const auto sol = ilqr_solve(prob, x0);
  bool saturated = false;
  for (const Vec& u : sol.u) {
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_GE(u[i], prob.u_lower[i]);
      EXPECT_LE(u[i], prob.u_upper[i]);
      saturated |= std::abs(std::abs(u[i]) - 0.05) < 1e-12 && i > 0;
    }
  }
  EXPECT_TRUE(saturated);
}

TEST(IlqrSolve, TighterBoundsNeverLowerTheCost) {
  std::mt19937_64 rng(7);
  auto model = quad();
  for (int trial = 0; trial < 5; ++trial) {
    std::uniform_real_distribution<double> a(-20 * kDeg, 20 * kDeg);
    const Vec x0 = tilted(a(rng), a(rng), a(rng));
    double previous = -1.0;
    for (double tmax : {1.0, 0.3, 0.1, 0.03}) {
      MpcSettings s;
      s.limits.torque_max = tmax;
      const auto sol = ilqr_solve(attitude_problem(model, s, x0, 9.81), x0, tight());
      EXPECT_GE(sol.cost, previous - 1e-9 * std::abs(previous));
      previous = sol.cost;
    }
  }
}

TEST(IlqrSolve, InvalidProblemIsRejected) {
  auto model = quad();
  MpcSettings s;
  s.horizon = 1;
  EXPECT_THROW(attitude_problem(model, s, Vec(kStateDim), 9.81), std::invalid_argument);
  s.horizon = 10;
  auto prob = attitude_problem(model, s, Vec(kStateDim), 9.81);
  EXPECT_THROW(ilqr_solve(prob, Vec(11)), DimensionError);
}

// Closed loop on the noise-free plant at 1 kHz with the controller at 50 Hz.
struct ClosedLoop {
  double settle_time = -1.0;  // last time |angle| exceeded 1.5 deg
  double max_final = 0.0;     // max |angle| over the last second
};

ClosedLoop run_closed_loop(double angle, double seconds) {
  auto model = quad();
  const MpcSettings s;
  MpcController ctl;
  VehicleParams<double> truth;
  VehicleState x;
  x.attitude = {angle, angle, angle};
  ClosedLoop out;
  const int control_steps = static_cast<int>(std::lround(seconds / 0.02));
  for (int k = 0; k < control_steps; ++k) {
    const Vec xv = x.to_vec();
    const ControlInput u = ctl.step(attitude_problem(model, s, xv, 9.81), x);
    for (int i = 0; i < 20; ++i) {
      x = step(x, u, truth, 1e-3);
      const double t = k * 0.02 + (i + 1) * 1e-3;
      const double worst = std::max({std::abs(x.attitude[0]), std::abs(x.attitude[1]), std::abs(x.attitude[2])});
      if (worst > 1.5 * kDeg) out.settle_time = t;
      if (t > seconds - 1.0) out.max_final = std::max(out.max_final, worst);
    }
  }
  return out;
}

TEST(MpcStep, SettlesFromTwentyDegrees) {
  const ClosedLoop r = run_closed_loop(20 * kDeg, 5.0);
  EXPECT_LE(r.settle_time, 0.5);
  EXPECT_LT(r.max_final, 1.5 * kDeg);
}

TEST(MpcStep, HoverReturnsHoverThrust) {
  auto model = quad();
  MpcController ctl;
  const Vec x0(kStateDim);
  const Vec u = ctl.step(attitude_problem(model, MpcSettings{}, x0, 9.81), x0);
  EXPECT_NEAR(u[0], 9.81, 1e-9);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(u[i], 0.0, 1e-9);
}

TEST(MpcStep, PitchUpGivesRestoringTorque) {
  auto model = quad();
  MpcController ctl;
  const Vec x0 = tilted(0.0, 10 * kDeg, 0.0);
  const Vec u = ctl.step(attitude_problem(model, MpcSettings{}, x0, 9.81), x0);
  EXPECT_LT(u[2], 0.0);
}

TEST(MpcStep, MedianSolveTimeWithinBudget) {
  auto model = quad();
  const MpcSettings s;
  MpcController ctl;
  VehicleParams<double> truth;
  VehicleState x;
  x.attitude = {20 * kDeg, 20 * kDeg, 20 * kDeg};
  std::vector<double> ms;
  for (int k = 0; k < 50; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const ControlInput u = ctl.step(attitude_problem(model, s, x.to_vec(), 9.81), x);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    for (int i = 0; i < 20; ++i) x = step(x, u, truth, 1e-3);
  }
  std::nth_element(ms.begin(), ms.begin() + ms.size() / 2, ms.end());
  EXPECT_LE(ms[ms.size() / 2], 20.0);
}

TEST(MpcTrace, WritesCsv) {
  auto model = quad();
  const Vec x0 = tilted(0.1, 0.0, 0.0);
  const auto sol = ilqr_solve(attitude_problem(model, MpcSettings{}, x0, 9.81), x0);
  const std::string path = ::testing::TempDir() + "/trace.csv";
  write_trace_csv(path, sol.trace);
  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "iteration,cost,du,regularization,alpha");
}

// ---------------------------------------------------------------------------
// Gradients.

TEST(BackwardFixedPoint, LossIndependentOfTrajectoryGivesZero) {
  Tape tape;
  const Var lm = tape.variable(0.0);
  VehicleParams<Var> p;
  p.mass = exp(lm);
  auto model = std::make_shared<QuadrotorModel>(p, 0.02);
  const Vec x0 = tilted(0.1, 0.05, 0.0);
  const auto prob = attitude_problem(model, MpcSettings{}, x0, 9.81);
  const auto sol = ilqr_solve(prob, x0, tight());
  const Gradient g = backward_fixed_point(prob, sol, Vec(trajectory_size(prob)));
  EXPECT_EQ(g[lm], 0.0);
}

TEST(BackwardFixedPoint, UnconvergedSolutionIsRejected) {
  auto model = quad();
  const Vec x0 = tilted(0.3, 0.3, 0.3);
  const auto prob = attitude_problem(model, MpcSettings{}, x0, 9.81);
  SolverOptions o;
  o.max_iterations = 1;
  o.tolerance = 1e-14;
  const auto sol = ilqr_solve(prob, x0, o);
  ASSERT_FALSE(sol.converged);
  EXPECT_THROW(backward_fixed_point(prob, sol, Vec(trajectory_size(prob), 1.0)), SolverError);
}

TEST(BackwardFixedPoint, MatchesKktGradientOnLqProblems) {
  EXPECT_LE(testing::fixed_point_vs_kkt(5), 1e-6);
}

TEST(KktGradient, ScalarOneStepClosedForm) {
  // min q x0^2 + r u^2 + q (a x0 + b u)^2 ; u* = -q a b x0 / (r + q b^2).
  const double a = 0.9, b = 0.5, r = 0.7, x0 = 1.3;
  Tape tape;
  const Var q = tape.variable(2.0);
  auto model = std::make_shared<LinearModel>(Mat(1, 1, {a}), Mat(1, 1, {b}));
  const auto prob = MpcProblem::tracking(model, 2, Vector<Var>{q, Var(r)}, Vector<Var>{Var(0.0), Var(0.0)},
                                         Vec{0.0}, Vec{0.0}, Vec{-1e6}, Vec{1e6});
  const auto sol = solve_lq_kkt(prob, Vec{x0});
  const double qv = q.value();
  EXPECT_NEAR(sol.mu[1], -qv * a * b * x0 / (r + qv * b * b), 1e-12);
  Vec w(3);
  w[1] = 1.0;  // loss = u*
  const Gradient g = kkt_gradient(prob, Vec{x0}, sol, w);
  const double expected = -a * b * x0 * r / std::pow(r + qv * b * b, 2);
  EXPECT_NEAR(g[q], expected, 1e-10);
}

TEST(KktGradient, MatchesFiniteDifferencesOnEqualityOnlyProblem) {
  std::mt19937_64 rng(21);
  TapedLq t = taped_lq(rng, 1e6);
  const Vec x0{1.0, 0.5, -0.3, 0.1};
  Vec w(trajectory_size(t.prob));
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : w) v = n(rng);
  const auto sol = solve_lq_kkt(t.prob, x0);
  const Gradient g = kkt_gradient(t.prob, x0, sol, w);
  // Rebuild the problem with one perturbed parameter at a time.
  auto loss_with = [&](std::size_t which, double delta) {
    MpcProblem p = t.prob;
    const auto* lin = dynamic_cast<const LinearModel*>(t.prob.model.get());
    Mat bm = values(lin->b());
    if (which == 0) bm(2, 0) += delta;
    p.model = std::make_shared<LinearModel>(values(lin->a()), bm);
    Vec q = values(p.q), pp = values(p.p);
    if (which > 0) {
      const std::size_t i = (which - 1) / 2;
      ((which - 1) % 2 == 0 ? q[i] : pp[i]) += delta;
    }
    p.q = cast<Var>(q);
    p.p = cast<Var>(pp);
    return dot(w, solve_lq_kkt(p, x0).mu);
  };
  const double h = 1e-6;
  for (std::size_t i = 0; i < t.theta.size(); ++i) {
    const double fd = (loss_with(i, h) - loss_with(i, -h)) / (2 * h);
    EXPECT_NEAR(g[t.theta[i]], fd, 1e-8 * std::max(1.0, std::abs(fd)) + 1e-8) << "theta " << i;
  }
}

TEST(KktGradient, MultipliersSatisfyStationarity) {
  std::mt19937_64 rng(4);
  auto model = std::make_shared<LinearModel>(double_integrator(3, 0.1));
  const auto prob = lq_problem(model, 10, 1e6, rng);
  const Vec x0{0.3, -0.2, 0.5, 0.0, 0.1, -0.4};
  const auto sol = solve_lq_kkt(prob, x0);
  Vec z(sol.kkt.rows());
  for (std::size_t i = 0; i < sol.mu.size(); ++i) z[i] = sol.mu[i];
  for (std::size_t i = 0; i < sol.lambda.size(); ++i) z[sol.mu.size() + i] = sol.lambda[i];
  // Stationarity rows of K z + r0 vanish; r0 is the cost gradient at mu = 0.
  const Vec kz = sol.kkt * z;
  double worst = 0.0;
  for (std::size_t k = 0; k < static_cast<std::size_t>(prob.horizon); ++k) {
    for (std::size_t i = 0; i < prob.nx(); ++i) {
      const std::size_t r = state_offset(prob, static_cast<int>(k)) + i;
      const double r0 = -2.0 * prob.q[i].value() * prob.x_ref[k][i] + prob.p[i].value();
      worst = std::max(worst, std::abs(kz[r] + r0));
    }
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(BackwardFixedPoint, MatchesFiniteDifferencesThroughSolver) {
  const auto r = quad_fd_check(20, true);
  EXPECT_EQ(r.checked, 20);
  EXPECT_LE(r.max_rel, 1e-3);
}

TEST(BackwardFixedPoint, GaussNewtonVariantIsClose) {
  const auto r = quad_fd_check(5, false);
  RecordProperty("gauss_newton_max_rel", std::to_string(r.max_rel));
  std::cout << "Gauss-Newton fixed-point max relative error: " << r.max_rel << "\n";
  EXPECT_LE(r.max_rel, 0.5);
}

}  // namespace
}  // namespace impc
