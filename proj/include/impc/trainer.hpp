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

// Bilevel self-supervised training: MPC acts on the estimated state, the
// plant produces new IMU data, and the discrepancy between the next estimate
// and the model prediction updates the denoiser and the vehicle parameters.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "impc/dmpc.hpp"
#include "impc/io_net.hpp"
#include "impc/sensor_sim.hpp"

namespace impc {

enum class Method { kImuMpc, kImuPlusMpc, kImuMpcPlus, kImpc };

inline constexpr std::array<Method, 4> kAllMethods = {Method::kImuMpc, Method::kImuPlusMpc,
                                                      Method::kImuMpcPlus, Method::kImpc};

Method parse_method(const std::string& s);
std::string to_string(Method m);  // config key, e.g. "imu_plus_mpc"
std::string label(Method m);      // display label, e.g. "IMU+ + MPC"
bool learns_network(Method m);
bool learns_dynamics(Method m);

// Everything about the simulated world and the controller that is not
// learned.
struct Environment {
  PlantConfig plant;
  NoiseModel imu = NoiseModel::epson_g365();
  MlpConfig network;
  MpcSettings mpc;
  double control_dt = 0.02;
};

// The learnable quantities, as plain values.
struct LearnedModel {
  MlpWeights weights;
  bool use_network = false;
  double log_mass = 0.0;
  Vec3 log_inertia{};
  std::optional<Vec> cost_q;  // present when the cost is learned
  std::optional<Vec> cost_p;

  // Parameters at `scale` times the true values, zero-head network.
  static LearnedModel initial(const Environment& env, double scale, std::uint64_t net_seed,
                              bool use_network);
  VehicleParams<double> params(double gravity) const;
  Checkpoint to_checkpoint(std::uint64_t seed, std::uint64_t step) const;
  static LearnedModel from_checkpoint(const Checkpoint& c, const MlpConfig& cfg, bool use_network);
};

struct UpperLossWeights {
  double position = 1.0;
  double attitude = 1.0;
  double velocity = 1.0;
  double rate = 1.0;
  double auxiliary = 0.1;  // specific-force consistency term
};

struct TimedState {
  double t = 0.0;
  StateVec<Var> x;
};

// U = || W (x_meas - x_pred) ||_2. Throws std::invalid_argument when the two
// states refer to different times.
Var upper_loss(const TimedState& x_pred, const TimedState& x_meas, const UpperLossWeights& w = {});

// || mean_s (corrected accel_s - R_s' (a_world_s + g e3)) ||_2 with R_s the
// estimated attitude at each sample.
Var specific_force_residual(const std::vector<CorrectedSample<Var>>& window,
                            const std::vector<Rot<Var>>& attitudes,
                            const std::vector<Vec3>& accel_world, double gravity);

// Everything the per-step upper loss consumes besides x_k^I and u_k.
struct StepObservation {
  std::vector<CorrectedSample<Var>> corrected;  // window k -> k+1
  VehicleState truth_next;                      // translational fields of x^I_{k+1}
  std::vector<Vec3> accel_world;                // true world acceleration per sample
};

// U(x_{k+1,pred}, x^I_{k+1}) + auxiliary specific-force term, where
// x_{k+1,pred} = step(x_k, u, params) and x^I_{k+1} integrates the corrected
// window starting from `pre_k`. Gradients reach whatever in x_k, u, params,
// pre_k and the window lives on the tape.
Var step_upper_loss(const StateVec<Var>& x_k, const ControlVec<Var>& u,
                    const VehicleParams<Var>& params, const Preintegrator<Var>& pre_k,
                    const StepObservation& obs, double dt, const UpperLossWeights& w);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void update(std::vector<double>& params, const std::vector<double>& grad);
  long long steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  long long t_ = 0;
  std::vector<double> m_, v_;
};

struct TrainConfig {
  Method method = Method::kImpc;
  int steps = 2000;  // online updates, one per control step
  double episode_seconds = 5.0;
  double initial_attitude_deg = 20.0;  // random sign per angle
  double network_lr = 1e-3;
  double mass_lr = 1e-2;     // gradient descent on log m
  double inertia_lr = 0.1;   // gradient descent on log J
  double cost_lr = 1e-3;
  bool learn_cost = false;
  double initial_param_scale = 1.5;
  int validation_every = 200;
  int validation_seeds = 3;
  double validation_seconds = 1.0;
  UpperLossWeights loss;
  std::uint64_t seed = 0;
  std::string checkpoint_format = "json";  // "json" or "binary"
};

struct TrainStepRecord {
  long long step = 0;
  double upper_loss = 0.0;
  double grad_norm = 0.0;
  double mass = 0.0;
  Vec3 inertia{};
  double imu_rmse = 0.0;  // running over the current episode, rad
  bool failed = false;    // episode aborted by divergence at this step
};

// Episode settings shared by training, validation and evaluation.
struct EpisodeSpec {
  Vec3 initial_attitude{};
  double seconds = 2.0;
  std::uint64_t seed = 0;
  std::optional<WindEvent> wind;
};

// Online estimator: corrected gyro integration from the true initial
// attitude. Translational fields of the estimate come from the plant truth.
class AttitudeEstimator {
 public:
  AttitudeEstimator(const LearnedModel& model, const MlpConfig& cfg, const ImuSample& first,
                    const Vec3& initial_attitude);

  // Consumes one control period of samples.
  void update(const std::vector<ImuSample>& window);
  VehicleState estimate(const VehicleState& truth) const;
  const Preintegrator<double>& integrator() const { return pre_; }
  const Vec3& attitude() const { return attitude_; }
  const Vec3& rate() const { return rate_; }
  // Resets to a state computed elsewhere (the trainer's on-tape update).
  void assign(const Preintegrator<double>& pre, const Vec3& attitude, const Vec3& rate);

 private:
  CorrectedSample<double> correct(const ImuSample& s) const;
  const LearnedModel* model_;
  const MlpConfig* cfg_;
  Preintegrator<double> pre_;
  Vec3 attitude_{};
  Vec3 rate_{};
};

MpcProblem build_problem(const Environment& env, const LearnedModel& model, const Vec& x_init);

struct EpisodeResult {
  double plant_dt = 1e-3;
  std::vector<Vec3> attitude;           // true attitude at every plant step (t = 0 included)
  std::vector<Vec3> estimate_error;     // estimate - truth at each control step
  std::vector<double> upper_losses;     // per control step, when requested
  bool diverged = false;
  std::string failure;
  double imu_rmse() const;
};

// Closed loop with no learning. Divergence (non-finite state, gimbal guard,
// |roll| or |pitch| > 90 deg, solver failure) ends the episode early.
EpisodeResult run_episode(const Environment& env, const LearnedModel& model, const EpisodeSpec& spec,
                          bool compute_upper_loss = false, const UpperLossWeights& w = {});

class Trainer {
 public:
  Trainer(const Environment& env, const TrainConfig& cfg);
  Trainer(const Environment& env, const TrainConfig& cfg, LearnedModel initial);

  // One control step with one parameter update.
  TrainStepRecord train_step();

  const LearnedModel& model() const { return model_; }
  long long step_count() const { return step_; }
  int episode() const { return episode_; }

 private:
  void start_episode();

  Environment env_;
  TrainConfig cfg_;
  LearnedModel model_;
  Adam net_opt_;
  Adam cost_opt_;
  long long step_ = 0;
  int episode_ = -1;
  int episode_step_ = 0;
  int steps_per_episode_;
  std::optional<PlantSimulator> plant_;
  std::optional<AttitudeEstimator> estimator_;
  MpcController controller_;
  std::mt19937_64 rng_;
  double episode_sq_error_ = 0.0;
  int episode_samples_ = 0;
};

struct ValidationRecord {
  long long step = 0;
  double median_upper_loss = 0.0;
};

struct TrainingResult {
  LearnedModel best;
  LearnedModel final_model;
  long long best_step = 0;
  std::vector<TrainStepRecord> records;
  std::vector<ValidationRecord> validation;
};

// Deterministic given cfg.seed. With output_dir set, writes train-log.csv,
// validation.csv and checkpoint-<method>.{json,bin} there; the log is flushed even
// when training throws.
TrainingResult run_training(const Environment& env, const TrainConfig& cfg,
                            const std::string& output_dir = "");

// "checkpoint-<method>.json" or ".bin" per cfg.checkpoint_format.
std::string checkpoint_name(const TrainConfig& cfg);

double validate(const Environment& env, const TrainConfig& cfg, const LearnedModel& model);

void write_train_log(const std::string& path, const std::vector<TrainStepRecord>& records);

}  // namespace impc
