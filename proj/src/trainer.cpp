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

#include "impc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace impc {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<CorrectedSample<Var>> lift(const std::vector<CorrectedSample<double>>& in) {
  std::vector<CorrectedSample<Var>> out;
  out.reserve(in.size());
  for (const auto& s : in) {
    CorrectedSample<Var> c;
    c.t = s.t;
    for (int i = 0; i < 3; ++i) {
      c.gyro[i] = s.gyro[i];
      c.accel[i] = s.accel[i];
    }
    out.push_back(c);
  }
  return out;
}

std::vector<CorrectedSample<double>> correct_window(const LearnedModel& m, const MlpConfig& cfg,
                                                    const std::vector<ImuSample>& w) {
  return m.use_network ? denoise(w, m.weights, cfg) : passthrough(w);
}

StateVec<Var> lift_state(const VehicleState& x) {
  const StateVec<double> a = x.to_array();
  StateVec<Var> out;
  for (std::size_t i = 0; i < kStateDim; ++i) out[i] = a[i];
  return out;
}

Vec3 attitude_error(const Vec3& est, const Vec3& truth) {
  return {wrap_angle(est[0] - truth[0]), wrap_angle(est[1] - truth[1]),
          wrap_angle(est[2] - truth[2])};
}

bool tipped_over(const VehicleState& x) {
  return !(std::abs(x.attitude[0]) <= 90.0 * kDeg && std::abs(x.attitude[1]) <= 90.0 * kDeg);
}

// True world acceleration at the timestamps of the latest samples.
std::vector<Vec3> sample_accels(const PlantSimulator& plant, const std::vector<ImuSample>& samples) {
  const auto& truth = plant.truth_history();
  if (truth.size() < samples.size()) throw DimensionError("plant truth shorter than IMU window");
  std::vector<Vec3> out;
  const std::size_t first = truth.size() - samples.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const TruthSample& ts = truth[first + i];
    if (std::abs(ts.t - samples[i].t) > 1e-9) throw std::logic_error("truth/IMU timestamps differ");
    out.push_back(ts.accel_world);
  }
  return out;
}

// Integrates one sample at a time and keeps each intermediate rotation.
template <class S>
AttitudeEstimate<S> integrate_each(Preintegrator<S>& pre,
                                   const std::vector<CorrectedSample<S>>& samples,
                                   std::vector<Rot<S>>& rotations) {
  AttitudeEstimate<S> est;
  for (const auto& s : samples) {
    est = pre.integrate({s});
    rotations.push_back(pre.rotation());
  }
  return est;
}

}  // namespace

// ---------------------------------------------------------------------------
// Methods.

Method parse_method(const std::string& s) {
  if (s == "imu_mpc") return Method::kImuMpc;
  if (s == "imu_plus_mpc") return Method::kImuPlusMpc;
  if (s == "imu_mpc_plus") return Method::kImuMpcPlus;
  if (s == "impc") return Method::kImpc;
  throw std::invalid_argument("unknown method '" + s +
                              "' (expected imu_mpc, imu_plus_mpc, imu_mpc_plus or impc)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kImuMpc: return "imu_mpc";
    case Method::kImuPlusMpc: return "imu_plus_mpc";
    case Method::kImuMpcPlus: return "imu_mpc_plus";
    case Method::kImpc: return "impc";
  }
  return "?";
}

std::string label(Method m) {
  switch (m) {
    case Method::kImuMpc: return "IMU + MPC";
    case Method::kImuPlusMpc: return "IMU+ + MPC";
    case Method::kImuMpcPlus: return "IMU + MPC+";
    case Method::kImpc: return "iMPC";
  }
  return "?";
}

bool learns_network(Method m) { return m == Method::kImuPlusMpc || m == Method::kImpc; }
bool learns_dynamics(Method m) { return m == Method::kImuMpcPlus || m == Method::kImpc; }

// ---------------------------------------------------------------------------
// LearnedModel.

LearnedModel LearnedModel::initial(const Environment& env, double scale, std::uint64_t net_seed,
                                   bool use_network) {
  if (!(scale > 0.0)) throw std::invalid_argument("initial parameter scale must be positive");
  LearnedModel m;
  m.weights = MlpWeights::initialize(env.network, net_seed);
  m.use_network = use_network;
  m.log_mass = std::log(scale * env.plant.params.mass);
  for (int i = 0; i < 3; ++i) m.log_inertia[i] = std::log(scale * env.plant.params.inertia[i]);
  return m;
}

VehicleParams<double> LearnedModel::params(double gravity) const {
  return params_from_log(log_mass, log_inertia, gravity);
}

Checkpoint LearnedModel::to_checkpoint(std::uint64_t seed, std::uint64_t step) const {
  Checkpoint c;
  c.weights = weights;
  c.seed = seed;
  c.step = step;
  c.mass = std::exp(log_mass);
  for (int i = 0; i < 3; ++i) c.inertia[i] = std::exp(log_inertia[i]);
  return c;
}

LearnedModel LearnedModel::from_checkpoint(const Checkpoint& c, const MlpConfig& cfg,
                                           bool use_network) {
  c.weights.check_shapes(cfg);
  if (!(c.mass > 0.0) || !(c.inertia[0] > 0.0) || !(c.inertia[1] > 0.0) || !(c.inertia[2] > 0.0)) {
    throw DimensionError("checkpoint mass and inertia must be positive");
  }
  LearnedModel m;
  m.weights = c.weights;
  m.use_network = use_network;
  m.log_mass = std::log(c.mass);
  for (int i = 0; i < 3; ++i) m.log_inertia[i] = std::log(c.inertia[i]);
  return m;
}

// ---------------------------------------------------------------------------
// Losses.

Var upper_loss(const TimedState& x_pred, const TimedState& x_meas, const UpperLossWeights& w) {
  if (std::abs(x_pred.t - x_meas.t) > 1e-9) {
    throw std::invalid_argument("upper loss: prediction at t=" + std::to_string(x_pred.t) +
                                " but measurement at t=" + std::to_string(x_meas.t));
  }
  const double block[4] = {w.position, w.attitude, w.velocity, w.rate};
  std::vector<Var> r(kStateDim);
  for (std::size_t i = 0; i < kStateDim; ++i) {
    Var d = x_meas.x[i] - x_pred.x[i];
    if (i >= 3 && i < 6) {
      // Keep angle residuals on the short arc without breaking the tape.
      d = d + (wrap_angle(d.value()) - d.value());
    }
    r[i] = block[i / 3] * d;
  }
  return norm(r);
}

Var specific_force_residual(const std::vector<CorrectedSample<Var>>& window,
                            const std::vector<Rot<Var>>& attitudes,
                            const std::vector<Vec3>& accel_world, double gravity) {
  if (window.empty()) throw std::invalid_argument("specific force residual: empty window");
  if (attitudes.size() != window.size() || accel_world.size() != window.size()) {
    throw DimensionError("specific force residual: " + std::to_string(window.size()) +
                         " samples, " + std::to_string(attitudes.size()) + " attitudes, " +
                         std::to_string(accel_world.size()) + " accelerations");
  }
  const double inv = 1.0 / static_cast<double>(window.size());
  std::vector<Var> res(3, Var(0.0));
  for (std::size_t k = 0; k < window.size(); ++k) {
    const Vec3T<Var> f_world{accel_world[k][0], accel_world[k][1], accel_world[k][2] + gravity};
    const Vec3T<Var> expected = rotate_transpose(attitudes[k], f_world);
    for (int i = 0; i < 3; ++i) res[i] = res[i] + inv * (window[k].accel[i] - expected[i]);
  }
  return norm(res);
}

Var step_upper_loss(const StateVec<Var>& x_k, const ControlVec<Var>& u,
                    const VehicleParams<Var>& params, const Preintegrator<Var>& pre_k,
                    const StepObservation& obs, double dt, const UpperLossWeights& w) {
  if (obs.corrected.empty()) throw std::invalid_argument("upper loss: empty IMU window");
  Preintegrator<Var> pre = pre_k;
  std::vector<Rot<Var>> rots;
  const AttitudeEstimate<Var> est = integrate_each(pre, obs.corrected, rots);
  const StateVec<Var> x_meas = estimate_state<Var>(est.euler, obs.corrected.back().gyro, obs.truth_next);
  const StateVec<Var> x_pred = rk4<Var>(x_k, u, params, dt);
  const double t_pred = pre_k.time() + dt;
  Var loss = upper_loss({t_pred, x_pred}, {est.t, x_meas}, w);
  if (w.auxiliary != 0.0) {
    loss = loss + w.auxiliary * specific_force_residual(obs.corrected, rots, obs.accel_world,
                                                        params.gravity);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Adam.

void Adam::update(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != grad.size()) {
    throw DimensionError("adam: " + std::to_string(params.size()) + " params but " +
                         std::to_string(grad.size()) + " gradients");
  }
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  } else if (m_.size() != params.size()) {
    throw DimensionError("adam: parameter count changed");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

// ---------------------------------------------------------------------------
// Estimator and closed loop.

AttitudeEstimator::AttitudeEstimator(const LearnedModel& model, const MlpConfig& cfg,
                                     const ImuSample& first, const Vec3& initial_attitude)
    : model_(&model), cfg_(&cfg), pre_(first.t, initial_attitude), attitude_(initial_attitude) {
  const CorrectedSample<double> c = correct(first);
  pre_.seed_history(c.gyro);
  rate_ = c.gyro;
}

CorrectedSample<double> AttitudeEstimator::correct(const ImuSample& s) const {
  CorrectedSample<double> c{s.t, s.gyro, s.accel};
  if (!model_->use_network) return c;
  const auto out = model_->weights.forward(imu_features(s));
  for (int i = 0; i < 3; ++i) {
    c.gyro[i] += cfg_->gyro_scale * out[i];
    c.accel[i] += cfg_->accel_scale * out[3 + i];
  }
  return c;
}

void AttitudeEstimator::update(const std::vector<ImuSample>& window) {
  const auto corrected = correct_window(*model_, *cfg_, window);
  attitude_ = pre_.integrate(corrected).euler;
  rate_ = corrected.back().gyro;
}

VehicleState AttitudeEstimator::estimate(const VehicleState& truth) const {
  return estimate_state(attitude_, rate_, truth);
}

void AttitudeEstimator::assign(const Preintegrator<double>& pre, const Vec3& attitude,
                               const Vec3& rate) {
  pre_ = pre;
  attitude_ = attitude;
  rate_ = rate;
}

MpcProblem build_problem(const Environment& env, const LearnedModel& model, const Vec& x_init) {
  const VehicleParams<double> p = model.params(env.plant.params.gravity);
  auto dyn = std::make_shared<QuadrotorModel>(p, env.mpc.dt);
  std::optional<Vector<Var>> q, lin;
  if (model.cost_q) q = cast<Var>(*model.cost_q);
  if (model.cost_p) lin = cast<Var>(*model.cost_p);
  return attitude_problem(dyn, env.mpc, x_init, p.mass * p.gravity, {}, q ? &*q : nullptr,
                          lin ? &*lin : nullptr);
}

double EpisodeResult::imu_rmse() const {
  if (estimate_error.empty()) return 0.0;
  double s = 0.0;
  for (const Vec3& e : estimate_error) s += e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
  return std::sqrt(s / (3.0 * static_cast<double>(estimate_error.size())));
}

EpisodeResult run_episode(const Environment& env, const LearnedModel& model, const EpisodeSpec& spec,
                          bool compute_upper_loss, const UpperLossWeights& w) {
  VehicleState x0;
  x0.attitude = spec.initial_attitude;
  PlantSimulator plant(env.plant, env.imu, x0, spec.seed, spec.wind);
  AttitudeEstimator est(model, env.network, plant.current_sample(), spec.initial_attitude);
  MpcController ctrl(env.mpc.solver);
  const double g = env.plant.params.gravity;
  const VehicleParams<double> p = model.params(g);

  EpisodeResult res;
  res.plant_dt = env.plant.dt;
  const long long steps = std::llround(spec.seconds / env.control_dt);
  for (long long k = 0; k < steps; ++k) {
    const VehicleState truth = plant.state();
    res.estimate_error.push_back(attitude_error(est.attitude(), truth.attitude));
    const VehicleState xk = est.estimate(truth);
    try {
      const ControlInput u = ctrl.step(build_problem(env, model, xk.to_vec()), xk);
      const std::vector<ImuSample> samples = plant.advance(u, env.control_dt);
      if (compute_upper_loss) {
        StepObservation obs{lift(correct_window(model, env.network, samples)), plant.state(),
                            sample_accels(plant, samples)};
        const VehicleParams<Var> pv{p.mass, {p.inertia[0], p.inertia[1], p.inertia[2]}, g};
        const ControlVec<double> ua = u.to_array();
        const Var loss = step_upper_loss(lift_state(xk), {ua[0], ua[1], ua[2], ua[3]}, pv,
                                         Preintegrator<Var>::from(est.integrator()), obs,
                                         env.control_dt, w);
        res.upper_losses.push_back(loss.value());
      }
      est.update(samples);
    } catch (const Error& e) {
      res.diverged = true;
      res.failure = e.what();
      break;
    }
    if (tipped_over(plant.state())) {
      res.diverged = true;
      res.failure = "attitude beyond 90 deg: " + describe(plant.state());
      break;
    }
  }
  res.attitude = plant.attitude_history();
  return res;
}

// ---------------------------------------------------------------------------
// Trainer.

Trainer::Trainer(const Environment& env, const TrainConfig& cfg)
    : Trainer(env, cfg,
              LearnedModel::initial(env, cfg.initial_param_scale, splitmix(cfg.seed),
                                    learns_network(cfg.method))) {}

Trainer::Trainer(const Environment& env, const TrainConfig& cfg, LearnedModel initial)
    : env_(env),
      cfg_(cfg),
      model_(std::move(initial)),
      net_opt_(cfg.network_lr),
      cost_opt_(cfg.cost_lr),
      controller_(env.mpc.solver),
      rng_(splitmix(cfg.seed ^ 0x5eed)) {
  if (std::abs(env.mpc.dt - env.control_dt) > 1e-12) {
    throw std::invalid_argument("MPC step " + std::to_string(env.mpc.dt) +
                                " differs from the control period " +
                                std::to_string(env.control_dt));
  }
  if (cfg.episode_seconds < env.control_dt) {
    throw std::invalid_argument("episode shorter than one control period");
  }
  steps_per_episode_ = static_cast<int>(std::llround(cfg.episode_seconds / env.control_dt));
  model_.weights.check_shapes(env.network);
  if (cfg.learn_cost) {
    if (!model_.cost_q) model_.cost_q = env.mpc.weights.diagonal();
    if (!model_.cost_p) model_.cost_p = Vec(kStateDim + kControlDim, 0.0);
  }
}

void Trainer::start_episode() {
  ++episode_;
  episode_step_ = 0;
  episode_sq_error_ = 0.0;
  episode_samples_ = 0;
  Vec3 att{};
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 3; ++i) {
    att[i] = (coin(rng_) ? 1.0 : -1.0) * cfg_.initial_attitude_deg * kDeg;
  }
  VehicleState x0;
  x0.attitude = att;
  plant_.emplace(env_.plant, env_.imu, x0, rng_(), std::nullopt);
  estimator_.emplace(model_, env_.network, plant_->current_sample(), att);
  controller_.reset();
}

TrainStepRecord Trainer::train_step() {
  if (episode_ < 0 || episode_step_ >= steps_per_episode_) start_episode();
  const bool learn_net = learns_network(cfg_.method);
  const bool learn_dyn = learns_dynamics(cfg_.method);
  const bool learn_cost = cfg_.learn_cost && model_.cost_q.has_value();
  const double g = env_.plant.params.gravity;

  TrainStepRecord rec;
  rec.step = step_;

  Tape tape;
  const Var log_m = learn_dyn ? tape.variable(model_.log_mass) : Var(model_.log_mass);
  Vec3T<Var> log_j;
  for (int i = 0; i < 3; ++i) {
    log_j[i] = learn_dyn ? tape.variable(model_.log_inertia[i]) : Var(model_.log_inertia[i]);
  }
  std::optional<Vector<Var>> q, lin;
  if (model_.cost_q) {
    q = Vector<Var>(model_.cost_q->size());
    for (std::size_t i = 0; i < q->size(); ++i) {
      (*q)[i] = learn_cost ? tape.variable((*model_.cost_q)[i]) : Var((*model_.cost_q)[i]);
    }
  }
  if (model_.cost_p) {
    lin = Vector<Var>(model_.cost_p->size());
    for (std::size_t i = 0; i < lin->size(); ++i) {
      (*lin)[i] = learn_cost ? tape.variable((*model_.cost_p)[i]) : Var((*model_.cost_p)[i]);
    }
  }
  const VehicleParams<Var> pv = params_from_log(log_m, log_j, g);
  auto dyn = std::make_shared<QuadrotorModel>(pv, env_.mpc.dt);

  const VehicleState truth_k = plant_->state();
  const VehicleState xk = estimator_->estimate(truth_k);
  // The thrust reference uses the current mass estimate but is not
  // differentiated.
  const MpcProblem prob = attitude_problem(dyn, env_.mpc, xk.to_vec(), pv.mass.value() * g, {},
                                           q ? &*q : nullptr, lin ? &*lin : nullptr);

  std::vector<ImuSample> samples;
  Vec u;
  try {
    u = controller_.step(prob, xk.to_vec());
    samples = plant_->advance(ControlInput{u[0], {u[1], u[2], u[3]}}, env_.control_dt);
  } catch (const Error&) {
    rec.failed = true;
  }
  if (!rec.failed && tipped_over(plant_->state())) rec.failed = true;
  if (rec.failed) {
    rec.mass = std::exp(model_.log_mass);
    for (int i = 0; i < 3; ++i) rec.inertia[i] = std::exp(model_.log_inertia[i]);
    rec.upper_loss = std::numeric_limits<double>::quiet_NaN();
    episode_step_ = steps_per_episode_;
    ++step_;
    return rec;
  }

  // Control as a function of the parameters through one fixed-point step.
  const MpcSolution& sol = controller_.last_solution();
  ControlVec<Var> u_var{u[0], u[1], u[2], u[3]};
  if ((learn_dyn || learn_cost) && sol.converged) {
    const std::vector<Var> mu = fixed_point_trajectory(prob, sol);
    const std::size_t off = control_offset(prob, 0);
    for (std::size_t i = 0; i < kControlDim; ++i) u_var[i] = mu[off + i];
  }

  // Next estimate through the (possibly learned) denoiser.
  BoundMlp bound;
  std::vector<CorrectedSample<Var>> corrected;
  if (learn_net) {
    bound = BoundMlp::bind(tape, model_.weights);
    corrected = denoise(samples, bound, env_.network);
  } else {
    corrected = lift(correct_window(model_, env_.network, samples));
  }
  const Preintegrator<Var> pre_k = Preintegrator<Var>::from(estimator_->integrator());
  StepObservation obs{std::move(corrected), plant_->state(), sample_accels(*plant_, samples)};
  const Var loss = step_upper_loss(lift_state(xk), u_var, pv, pre_k, obs, env_.control_dt, cfg_.loss);
  rec.upper_loss = loss.value();

  const Gradient grad = tape.backward(loss);
  double sq = 0.0;
  if (learn_net) {
    const std::vector<double> gw = bound.gradient(grad);
    for (double v : gw) sq += v * v;
    std::vector<double> flat = model_.weights.flatten();
    net_opt_.update(flat, gw);
    model_.weights.assign(flat);
  }
  if (learn_dyn) {
    const double gm = grad[log_m];
    sq += gm * gm;
    model_.log_mass -= cfg_.mass_lr * gm;
    for (int i = 0; i < 3; ++i) {
      const double gj = grad[log_j[i]];
      sq += gj * gj;
      model_.log_inertia[i] -= cfg_.inertia_lr * gj;
    }
  }
  if (learn_cost) {
    std::vector<double> flat, gc;
    for (std::size_t i = 0; i < q->size(); ++i) {
      flat.push_back((*model_.cost_q)[i]);
      gc.push_back(grad[(*q)[i]]);
    }
    for (std::size_t i = 0; i < lin->size(); ++i) {
      flat.push_back((*model_.cost_p)[i]);
      gc.push_back(grad[(*lin)[i]]);
    }
    for (double v : gc) sq += v * v;
    cost_opt_.update(flat, gc);
    // Diagonal weights stay positive so the problem remains convex.
    for (std::size_t i = 0; i < q->size(); ++i) (*model_.cost_q)[i] = std::max(flat[i], 1e-6);
    for (std::size_t i = 0; i < lin->size(); ++i) (*model_.cost_p)[i] = flat[q->size() + i];
  }
  rec.grad_norm = std::sqrt(sq);

  // Advance the running estimate with the same corrected window.
  Preintegrator<Var> pre = pre_k;
  const AttitudeEstimate<Var> est = pre.integrate(obs.corrected);
  Vec3 att, rate;
  for (int i = 0; i < 3; ++i) {
    att[i] = est.euler[i].value();
    rate[i] = obs.corrected.back().gyro[i].value();
  }
  estimator_->assign(pre.detached(), att, rate);
  const Vec3 e = attitude_error(att, obs.truth_next.attitude);
  episode_sq_error_ += e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
  episode_samples_ += 3;
  rec.imu_rmse = std::sqrt(episode_sq_error_ / episode_samples_);
  rec.mass = std::exp(model_.log_mass);
  for (int i = 0; i < 3; ++i) rec.inertia[i] = std::exp(model_.log_inertia[i]);
  ++episode_step_;
  ++step_;
  return rec;
}

// ---------------------------------------------------------------------------
// Training driver.

double validate(const Environment& env, const TrainConfig& cfg, const LearnedModel& model) {
  std::vector<double> losses;
  for (int i = 0; i < cfg.validation_seeds; ++i) {
    EpisodeSpec spec;
    for (int a = 0; a < 3; ++a) {
      const double sign = ((i + a) % 2 == 0) ? 1.0 : -1.0;
      spec.initial_attitude[a] = sign * cfg.initial_attitude_deg * kDeg;
    }
    spec.seconds = cfg.validation_seconds;
    spec.seed = splitmix(0xa11da7e0ULL + static_cast<std::uint64_t>(i));
    const EpisodeResult r = run_episode(env, model, spec, true, cfg.loss);
    if (r.diverged || r.upper_losses.empty()) {
      losses.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    double s = 0.0;
    for (double v : r.upper_losses) s += v;
    losses.push_back(s / static_cast<double>(r.upper_losses.size()));
  }
  if (losses.empty()) return std::numeric_limits<double>::infinity();
  std::sort(losses.begin(), losses.end());
  const std::size_t n = losses.size();
  return n % 2 == 1 ? losses[n / 2] : 0.5 * (losses[n / 2 - 1] + losses[n / 2]);
}

void write_train_log(const std::string& path, const std::vector<TrainStepRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(10);
  out << "step,upper_loss,grad_norm,mass,jxx,jyy,jzz,imu_rmse,failed\n";
  for (const auto& r : records) {
    out << r.step << ',' << r.upper_loss << ',' << r.grad_norm << ',' << r.mass << ','
        << r.inertia[0] << ',' << r.inertia[1] << ',' << r.inertia[2] << ',' << r.imu_rmse << ','
        << (r.failed ? 1 : 0) << '\n';
  }
}

namespace {

void write_validation(const std::string& path, const std::vector<ValidationRecord>& v) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(10);
  out << "step,median_upper_loss\n";
  for (const auto& r : v) out << r.step << ',' << r.median_upper_loss << '\n';
}

}  // namespace

std::string checkpoint_name(const TrainConfig& cfg) {
  if (cfg.checkpoint_format != "json" && cfg.checkpoint_format != "binary") {
    throw std::invalid_argument("checkpoint format must be \"json\" or \"binary\"");
  }
  return "checkpoint-" + to_string(cfg.method) + (cfg.checkpoint_format == "json" ? ".json" : ".bin");
}

TrainingResult run_training(const Environment& env, const TrainConfig& cfg,
                            const std::string& output_dir) {
  checkpoint_name(cfg);
  if (cfg.steps < 0) throw std::invalid_argument("steps must be non-negative");
  if (cfg.validation_every <= 0) throw std::invalid_argument("validation_every must be positive");
  Trainer trainer(env, cfg);
  TrainingResult res;
  res.best = trainer.model();
  double best = std::numeric_limits<double>::infinity();
  const bool learns = learns_network(cfg.method) || learns_dynamics(cfg.method) || cfg.learn_cost;

  auto flush = [&] {
    if (output_dir.empty()) return;
    std::filesystem::create_directories(output_dir);
    const std::filesystem::path dir(output_dir);
    write_train_log((dir / "train-log.csv").string(), res.records);
    write_validation((dir / "validation.csv").string(), res.validation);
  };
  auto check = [&](long long step) {
    const double v = validate(env, cfg, trainer.model());
    res.validation.push_back({step, v});
    if (v < best || res.validation.size() == 1) {
      best = v;
      res.best = trainer.model();
      res.best_step = step;
    }
  };

  try {
    if (learns) {
      for (int i = 0; i < cfg.steps; ++i) {
        res.records.push_back(trainer.train_step());
        if ((i + 1) % cfg.validation_every == 0) check(i + 1);
      }
      if (cfg.steps % cfg.validation_every != 0 || cfg.steps == 0) check(cfg.steps);
    }
  } catch (...) {
    flush();
    throw;
  }
  res.final_model = trainer.model();
  flush();
  if (!output_dir.empty()) {
    save_checkpoint((std::filesystem::path(output_dir) / checkpoint_name(cfg)).string(),
                    res.best.to_checkpoint(cfg.seed, static_cast<std::uint64_t>(res.best_step)));
  }
  return res;
}

}  // namespace impc
