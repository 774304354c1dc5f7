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

// Experiment grids, control metrics, results files and plots.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "impc/trainer.hpp"

namespace impc {

struct Scenario {
  Method method = Method::kImpc;
  std::string condition;               // row label, e.g. "20deg" or "step 15 m/s"
  double initial_attitude_deg = 20.0;  // applied to all three angles
  std::optional<WindEvent> wind;
  int trials = 10;
  std::uint64_t seed = 0;  // trial i runs with trial_seed(seed, i)
  double seconds = 2.0;
};

std::uint64_t trial_seed(std::uint64_t base, int trial);

// Throws std::invalid_argument when trials < 1 or seconds is too short to
// hold a 0.5 s steady window.
void check_scenario(const Scenario& s);

struct TrialMetrics {
  std::optional<double> settling_time;  // s; absent when never settled
  double rmse_deg = 0.0;
  double sse_deg = 0.0;
  double imu_rmse_rad = 0.0;
  bool failed = false;
  std::string failure;

  friend bool operator==(const TrialMetrics&, const TrialMetrics&) = default;
};

// Mean, sample standard deviation and median over the finite values given.
// All three are NaN when there are none; NaN fields compare equal.
struct Summary {
  int count = 0;
  double mean = 0.0;
  double std = 0.0;
  double median = 0.0;

  friend bool operator==(const Summary&, const Summary&);
};
Summary summarize(const std::vector<double>& values);

// Control metrics of one attitude trajectory (rad, plant rate). The steady
// attitude is the mean of the last `steady_window` seconds.
//  ST:   start of the final stretch in which every angle stays within
//        `band_deg` of the steady attitude.
//  RMSE: over all samples and angles, against `desired`.
//  SSE:  |steady - desired| (2-norm over the three angles).
TrialMetrics compute_metrics(const std::vector<Vec3>& attitude, double dt, const Vec3& desired,
                             double band_deg = 1.5, double steady_window = 0.5);

struct MetricReport {
  std::string method;  // config key
  std::string condition;
  std::vector<TrialMetrics> trials;
  Summary settling_time, rmse, sse, imu_rmse;  // over non-failed trials
  int failures = 0;

  // Recomputes the summaries from `trials`.
  void aggregate();
  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

struct TrialTrace {
  std::string method;
  std::string condition;
  double dt = 1e-3;
  std::vector<Vec3> attitude;  // rad
};

struct GridResult {
  std::vector<MetricReport> reports;  // one per scenario, in input order
  std::vector<TrialTrace> traces;     // first trial of every scenario
};

using ModelSet = std::map<Method, LearnedModel>;

// Runs every trial of every scenario. Trials are distributed over `threads`
// workers (0 picks the hardware concurrency); results do not depend on it.
// Throws std::invalid_argument if a scenario's method has no model.
GridResult run_grid(const Environment& env, const std::vector<Scenario>& scenarios,
                    const ModelSet& models, int threads = 0);

// {10, 15, 20} deg x the four methods.
std::vector<Scenario> initial_condition_grid(int trials, std::uint64_t seed,
                                             const std::vector<double>& degrees = {10, 15, 20});
// {impulse, step} x speeds x the four methods, starting level.
std::vector<Scenario> wind_grid(int trials, std::uint64_t seed,
                                const std::vector<double>& speeds = {10, 15, 20},
                                const WindEvent& base = {});

void write_results_csv(const std::string& path, const std::vector<MetricReport>& reports);
std::vector<MetricReport> read_results_csv(const std::string& path);  // summaries only
void write_results_json(const std::string& path, const std::vector<MetricReport>& reports);
std::vector<MetricReport> read_results_json(const std::string& path);

void write_trace_csv(const std::string& path, const TrialTrace& trace);
TrialTrace read_trace_csv(const std::string& path);

struct ThresholdProbe {
  double speed = 0.0;
  bool survived = true;
};

struct ThresholdResult {
  std::optional<double> threshold;  // lowest failing speed, absent if none up to the cap
  std::vector<ThresholdProbe> trace;  // every probe, in evaluation order
  // True when no probe survived at a speed above one that failed.
  bool monotone() const;
};

struct ThresholdConfig {
  double cap = 400.0;       // m/s
  double resolution = 1.0;  // m/s
  double seconds = 2.0;
  std::uint64_t seed = 0;
  WindEvent base;
};

// Bisection on wind speed for the lowest speed at which the closed loop
// diverges or flips.
ThresholdResult find_failure_threshold(const Environment& env, const LearnedModel& model,
                                       WindKind kind, const ThresholdConfig& cfg = {});
bool survives(const Environment& env, const LearnedModel& model, const WindEvent& wind,
              double seconds, std::uint64_t seed);

// Attitude-vs-time SVG (roll, pitch, yaw in degrees). Throws
// std::invalid_argument naming the series when it is empty.
std::string render_svg(const TrialTrace& trace);
void emit_plots(const std::string& dir, const std::vector<TrialTrace>& traces);

// File stem used for per-scenario artifacts, e.g. "impc_20deg".
std::string scenario_stem(const std::string& method, const std::string& condition);

}  // namespace impc
