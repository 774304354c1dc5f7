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


// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../support/oracles.hpp"
#include "../support/random_program.hpp"
#include "impc/config.hpp"
#include "impc/harness.hpp"

namespace impc {
namespace {

using testing::kDeg;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome autodiff() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = testing::check_random_compositions(1000, 20, 20260417);
  const double s = seconds_since(t0);
  return {c.programs == 1000 && c.max_relative_error <= 1e-6 && s < 10.0,
          fmt("%d programs, max rel err %.2e, %.2f s", c.programs, c.max_relative_error, s)};
}

Outcome lqr_oracle() {
  double worst = 0.0;
  bool converged = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto model = std::make_shared<LinearModel>(double_integrator(3, 0.1));
    const auto prob = testing::lq_problem(model, 10, 100.0, rng);
    std::normal_distribution<double> n(0.0, 0.5);
    Vec x0(6);
    for (double& v : x0) v = n(rng);
    const auto sol = ilqr_solve(prob, x0, testing::tight());
    converged &= sol.converged;
    worst = std::max(worst, norm_inf(flatten(prob, sol) - solve_lq_kkt(prob, x0).mu));
  }
  return {converged && worst <= 1e-8, fmt("10 problems, N=10, max |dmu|_inf %.2e", worst)};
}

Outcome implicit_gradient() {
  const double lq = testing::fixed_point_vs_kkt(10);
  const auto quad = testing::quad_fd_check(20, true);
  return {lq <= 1e-6 && quad.checked == 20 && quad.max_rel <= 1e-3,
          fmt("fixed point vs KKT %.2e (20 LQ problems); vs FD through solver %.2e rel over %d quadrotor seeds",
              lq, quad.max_rel, quad.checked)};
}

Outcome dynamics() {
  const VehicleParams<double> p;
  const auto dx = derivative(StateVec<double>{}, {p.mass * p.gravity, 0, 0, 0}, p);
  bool hover_zero = true;
  for (double v : dx) hover_zero &= v == 0.0;

  StateVec<double> x{};
  x[6] = 0.5;
  x[8] = 2.0;
  for (int k = 0; k < 1000; ++k) x = step(x, {0, 0, 0, 0}, p, 1e-3);
  const double fall = std::max({std::abs(x[0] - 0.5), std::abs(x[2] - (2.0 - 0.5 * p.gravity)),
                                std::abs(x[8] - (2.0 - p.gravity))});

  std::mt19937_64 rng(11);
  double lin = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto xs = testing::random_near_hover(rng);
    const auto us = testing::random_input(rng);
    const auto a = linearize(xs, us, p, 0.02);
    const auto fd = testing::finite_difference_jacobian(xs, us, p, 0.02, 1e-6);
    for (std::size_t r = 0; r < kStateDim; ++r) {
      for (std::size_t c = 0; c < kStateDim; ++c) lin = std::max(lin, std::abs(a.a(r, c) - fd.a(r, c)));
      for (std::size_t c = 0; c < kControlDim; ++c) lin = std::max(lin, std::abs(a.b(r, c) - fd.b(r, c)));
    }
  }
  return {hover_zero && fall <= 1e-9 && lin <= 1e-6,
          fmt("hover derivative %s, free-fall err %.2e, linearize vs FD %.2e", hover_zero ? "exactly 0" : "nonzero",
              fall, lin)};
}

Outcome preintegration() {
  Preintegrator<double> pre(0.0, {0, 0, 0});
  pre.seed_history({0, 0, 1});
  const auto est = pre.integrate(testing::constant_rate({0, 0, 1}, 0.0, 200, 0.005));
  const double yaw = std::max({std::abs(est.euler[2] - 1.0), std::abs(est.euler[0]), std::abs(est.euler[1])});
  const double trip = testing::round_trip_error(1.0, 0.0);
  return {yaw <= 1e-9 && trip <= 1e-6, fmt("yaw closed form %.2e, 1 s round trip %.2e rad", yaw, trip)};
}

Outcome trainer_contracts() {
  const testing::DetachmentCheck d = testing::detachment_check(11);
  const bool detached = d.value_gap <= 1e-12 && d.detached_gap <= 1e-10 * d.scale && d.kept_gap > 1e-4 * d.scale;

  TrainConfig cfg;
  cfg.method = Method::kImpc;
  cfg.mass_lr = cfg.inertia_lr = 50.0;
  cfg.episode_seconds = 0.4;
  Trainer t(Environment{}, cfg);
  double min_param = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 40; ++i) {
    const TrainStepRecord r = t.train_step();
    min_param = std::min({min_param, r.mass, r.inertia[0], r.inertia[1], r.inertia[2]});
  }
  std::mt19937_64 rng(3);
  std::normal_distribution<double> huge(0.0, 300.0);
  LearnedModel m = LearnedModel::initial(Environment{}, 1.5, 0, false);
  for (int i = 0; i < 1000; ++i) {
    m.log_mass -= huge(rng);
    for (double& j : m.log_inertia) j -= huge(rng);
    m.log_mass = std::clamp(m.log_mass, -700.0, 700.0);
    for (double& j : m.log_inertia) j = std::clamp(j, -700.0, 700.0);
    const auto p = m.params(9.81);
    min_param = std::min({min_param, p.mass, p.inertia[0], p.inertia[1], p.inertia[2]});
  }
  return {detached && min_param > 0.0,
          fmt("detached vs plain grad gap %.1e (scale %.1e), attached gap %.1e; min m/J over large steps %.1e",
              d.detached_gap, d.scale, d.kept_gap, min_param)};
}

// ---------------------------------------------------------------------------
// Directional reproductions share one trained model set.

struct Pipeline {
  Config config;
  ModelSet models;
  std::map<Method, TrainingResult> training;
  GridResult initial;
  double initial_seconds = 0.0;
  double training_seconds = 0.0;
  GridResult wind;
};

const MetricReport& row(const GridResult& g, Method m, const std::string& condition) {
  for (const MetricReport& r : g.reports) {
    if (r.method == to_string(m) && r.condition == condition) return r;
  }
  throw std::runtime_error("missing row " + to_string(m) + " " + condition);
}

Pipeline& pipeline() {
  static Pipeline p = [] {
    Pipeline out;
    out.config = parse_config("{}");
    const Config& c = out.config;
    const auto t0 = std::chrono::steady_clock::now();
    for (Method m : kAllMethods) {
      TrainingResult r = run_training(c.env, c.training_for(m));
      out.models[m] = r.best;
      out.training.emplace(m, std::move(r));
    }
    out.training_seconds = seconds_since(t0);
    const auto t1 = std::chrono::steady_clock::now();
    out.initial = run_grid(c.env, initial_condition_grid(c.evaluation.trials, c.evaluation_seed()), out.models,
                           c.threads);
    out.initial_seconds = seconds_since(t1);
    out.wind = run_grid(c.env, wind_grid(c.evaluation.trials, c.evaluation_seed(), {20.0}, c.wind), out.models,
                        c.threads);
    std::printf("  (training %.1f s, initial-condition grid %.1f s)\n", out.training_seconds, out.initial_seconds);
    return out;
  }();
  return p;
}

Outcome initial_conditions() {
  Pipeline& p = pipeline();
  const MetricReport& impc = row(p.initial, Method::kImpc, "20deg");
  const MetricReport& plus = row(p.initial, Method::kImuPlusMpc, "20deg");
  const MetricReport& base = row(p.initial, Method::kImuMpc, "20deg");
  double worst_st = 0.0, worst_sse = 0.0;
  bool all_settled = impc.failures == 0;
  for (const TrialMetrics& t : impc.trials) {
    all_settled &= t.settling_time.has_value();
    worst_st = std::max(worst_st, t.settling_time.value_or(std::numeric_limits<double>::infinity()));
    worst_sse = std::max(worst_sse, t.sse_deg);
  }
  const bool order_hi = impc.sse.median <= plus.sse.median;
  const bool order_lo = plus.sse.median <= base.sse.median;
  const bool fast = p.initial_seconds <= 15 * 60;
  return {all_settled && worst_st <= 0.5 && worst_sse <= 0.5 && order_hi && order_lo && fast,
          fmt("iMPC 20deg: ST max %.3f s (median %.3f), SSE max %.3f deg; median SSE iMPC %.3f %s IMU+ %.3f %s IMU %.3f; "
              "grid %.0f s",
              worst_st, impc.settling_time.median, worst_sse, impc.sse.median, order_hi ? "<=" : ">", plus.sse.median,
              order_lo ? "<=" : ">", base.sse.median, p.initial_seconds)};
}

Outcome parameter_learning() {
  Pipeline& p = pipeline();
  const VehicleParams<double>& truth = p.config.env.plant.params;
  std::string detail;
  bool pass = true;
  for (Method m : {Method::kImpc, Method::kImuMpcPlus}) {
    const VehicleParams<double> est = p.training.at(m).final_model.params(truth.gravity);
    const double me = 100.0 * std::abs(est.mass / truth.mass - 1.0);
    double je = 0.0;
    for (int i = 0; i < 3; ++i) je = std::max(je, 100.0 * std::abs(est.inertia[i] / truth.inertia[i] - 1.0));
    pass &= me <= 3.0 && je <= 5.0;
    detail += fmt("%s mass err %.2f%%, MOI err %.2f%%; ", label(m).c_str(), me, je);
  }
  detail += fmt("%d steps from 1.5x", p.config.training.steps);
  return {pass, detail};
}

Outcome imu_improvement() {
  Pipeline& p = pipeline();
  std::string detail;
  bool pass = true;
  for (const char* cond : {"10deg", "15deg", "20deg"}) {
    const double base = row(p.initial, Method::kImuMpc, cond).imu_rmse.median;
    const double learned = row(p.initial, Method::kImuPlusMpc, cond).imu_rmse.median;
    const double gain = 100.0 * (1.0 - learned / base);
    pass &= gain >= 10.0;
    detail += fmt("%s %.2e -> %.2e rad (%+.1f%%); ", cond, base, learned, -gain);
  }
  detail += "held-out seeds, medians of 10";
  return {pass, detail};
}

Outcome wind() {
  Pipeline& p = pipeline();
  bool recover = true;
  std::string detail;
  for (const char* cond : {"impulse 20 m/s", "step 20 m/s"}) {
    const MetricReport& r = row(p.wind, Method::kImpc, cond);
    double worst = 0.0;
    for (const TrialMetrics& t : r.trials) worst = std::max(worst, t.sse_deg);
    recover &= r.failures == 0 && worst <= 1.5;
    detail += fmt("%s: %d/%zu failed, final offset max %.2f deg; ", cond, r.failures, r.trials.size(), worst);
  }
  const ThresholdConfig tc = p.config.threshold_config();
  const LearnedModel& m = p.models.at(Method::kImpc);
  const ThresholdResult step = find_failure_threshold(p.config.env, m, WindKind::kStep, tc);
  const ThresholdResult impulse = find_failure_threshold(p.config.env, m, WindKind::kImpulse, tc);
  const bool exist = step.threshold && impulse.threshold;
  const bool order = exist && *step.threshold < *impulse.threshold && *step.threshold > 20.0;
  detail += fmt("thresholds step %.0f < impulse %.0f m/s (monotone %s)", step.threshold.value_or(std::nan("")),
                impulse.threshold.value_or(std::nan("")), step.monotone() && impulse.monotone() ? "yes" : "no");
  return {recover && exist && order && step.monotone() && impulse.monotone(), detail};
}

Outcome efficiency() {
  auto model = testing::quad();
  const MpcSettings s;
  MpcController ctl;
  VehicleParams<double> truth;
  VehicleState x;
  x.attitude = {20 * kDeg, 20 * kDeg, 20 * kDeg};
  std::vector<double> ms;
  for (int k = 0; k < 100; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const ControlInput u = ctl.step(attitude_problem(model, s, x.to_vec(), 9.81), x);
    ms.push_back(1e3 * seconds_since(t0));
    for (int i = 0; i < 20; ++i) x = step(x, u, truth, 1e-3);
  }
  std::sort(ms.begin(), ms.end());
  const double median = ms[ms.size() / 2];
  return {median <= 20.0, fmt("median mpc_step %.3f ms at N=%d (max %.3f ms), budget 20 ms", median, s.horizon,
                              ms.back())};
}

}  // namespace
}  // namespace impc

int main() {
  using namespace impc;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"autodiff vs finite differences", autodiff},
      {"iLQR vs dense KKT on LQ", lqr_oracle},
      {"implicit gradient oracles", implicit_gradient},
      {"dynamics", dynamics},
      {"pre-integration", preintegration},
      {"detachment and positivity", trainer_contracts},
      {"initial conditions", initial_conditions},
      {"parameter learning", parameter_learning},
      {"IMU improvement", imu_improvement},
      {"wind", wind},
      {"efficiency", efficiency},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %-32s %s  %s\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
