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

#include "impc/sensor_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <stdexcept>

namespace impc {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 gaussian3(std::mt19937_64& rng, double sigma) {
  if (sigma == 0.0) return {};
  std::normal_distribution<double> n(0.0, sigma);
  return {n(rng), n(rng), n(rng)};
}

Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }

}  // namespace

NoiseModel NoiseModel::epson_g365() {
  NoiseModel m;
  m.gyro.initial_bias = 360.0 * kDeg / 3600.0;
  m.gyro.bias_instability = 1.2 * kDeg / 3600.0;
  m.gyro.correlation_time = 100.0;
  m.gyro.white_density = 0.08 * kDeg / 60.0;
  m.accel.initial_bias = 3e-3 * 9.81;
  m.accel.bias_instability = 15e-6 * 9.81;
  m.accel.correlation_time = 100.0;
  m.accel.white_density = 0.025 / 60.0;
  return m;
}

ImuNoise::ImuNoise(const NoiseModel& model, std::uint64_t seed) : model_(model), rng_(seed) {
  std::mt19937_64 unit(model.unit_seed);
  gyro_turn_on_ = gaussian3(unit, model.gyro.initial_bias);
  accel_turn_on_ = gaussian3(unit, model.accel.initial_bias);
  gyro_walk_ = gaussian3(rng_, model.gyro.bias_instability);
  accel_walk_ = gaussian3(rng_, model.accel.bias_instability);
  gyro_bias_ = add(gyro_turn_on_, gyro_walk_);
  accel_bias_ = add(accel_turn_on_, accel_walk_);
}

std::pair<Vec3, Vec3> ImuNoise::next(double dt) {
  auto evolve = [&](Vec3& walk, const SensorNoise& s) {
    if (s.bias_instability == 0.0) return;
    const double phi = std::exp(-dt / s.correlation_time);
    const Vec3 n = gaussian3(rng_, s.bias_instability * std::sqrt(1.0 - phi * phi));
    for (int i = 0; i < 3; ++i) walk[i] = phi * walk[i] + n[i];
  };
  evolve(gyro_walk_, model_.gyro);
  evolve(accel_walk_, model_.accel);
  gyro_bias_ = add(gyro_turn_on_, gyro_walk_);
  accel_bias_ = add(accel_turn_on_, accel_walk_);
  const double root_rate = std::sqrt(model_.rate_hz);
  const Vec3 wg = gaussian3(rng_, model_.gyro.white_density * root_rate);
  const Vec3 wa = gaussian3(rng_, model_.accel.white_density * root_rate);
  return {add(gyro_bias_, wg), add(accel_bias_, wa)};
}

void TrueTrajectory::push(const TruthSample& s) {
  if (!samples.empty() && !(s.t > samples.back().t)) {
    throw std::invalid_argument("truth samples must be strictly increasing in t");
  }
  samples.push_back(s);
}

const TruthSample& TrueTrajectory::at(double t) const {
  auto it = std::lower_bound(samples.begin(), samples.end(), t - 1e-9,
                             [](const TruthSample& s, double v) { return s.t < v; });
  if (it == samples.end() || std::abs(it->t - t) > 1e-9) {
    throw std::out_of_range("no truth sample at t = " + std::to_string(t));
  }
  return *it;
}

ImuSample ideal_imu(const TruthSample& s, double gravity) {
  ImuSample out;
  out.t = s.t;
  out.gyro = s.state.body_rate;
  const Rot<double> r = rotation_from_euler(s.sensed_attitude);
  const Vec3 f{s.accel_world[0], s.accel_world[1], s.accel_world[2] + gravity};
  out.accel = rotate_transpose(r, f);
  return out;
}

ImuSample sample_imu(const TrueTrajectory& truth, ImuNoise& noise, double t, double gravity) {
  ImuSample out = ideal_imu(truth.at(t), gravity);
  const auto [gn, an] = noise.next(noise.period());
  out.gyro = add(out.gyro, gn);
  out.accel = add(out.accel, an);
  return out;
}

double PlantNoise::attitude_sigma_rad() const {
  if (attitude_unit == "rad") return attitude_sigma;
  if (attitude_unit == "deg") return attitude_sigma * kDeg;
  throw std::invalid_argument("attitude_unit must be \"rad\" or \"deg\", got \"" + attitude_unit +
                              "\"");
}

double inject_plant_noise(double value, double sigma, std::mt19937_64& rng) {
  if (sigma == 0.0) return value;
  std::normal_distribution<double> n(0.0, sigma);
  return value + n(rng);
}

Vec3 inject_plant_noise(const Vec3& value, double sigma, std::mt19937_64& rng) {
  return add(value, gaussian3(rng, sigma));
}

ControlInput inject_plant_noise(const ControlInput& u, double sigma, std::mt19937_64& rng) {
  if (sigma == 0.0) return u;
  return {inject_plant_noise(u.thrust, sigma, rng), inject_plant_noise(u.torque, sigma, rng)};
}

std::pair<long long, long long> WindEvent::active_steps(double plant_dt) const {
  const long long first = std::llround(start / plant_dt);
  const long long count = kind == WindKind::kImpulse ? 1 : std::llround(duration / plant_dt);
  return {first, first + count};
}

WindKind parse_wind_kind(const std::string& s) {
  if (s == "impulse") return WindKind::kImpulse;
  if (s == "step") return WindKind::kStep;
  throw std::invalid_argument("wind kind must be \"impulse\" or \"step\", got \"" + s + "\"");
}

std::string to_string(WindKind k) { return k == WindKind::kImpulse ? "impulse" : "step"; }

Wrench wind_wrench(const WindEvent& event, double t, double plant_dt, const Vec3& attitude) {
  const auto [first, last] = event.active_steps(plant_dt);
  const long long k = std::llround(t / plant_dt);
  if (k < first || k >= last || event.speed == 0.0) return {};
  const double dn = std::sqrt(event.direction[0] * event.direction[0] +
                              event.direction[1] * event.direction[1] +
                              event.direction[2] * event.direction[2]);
  const double mag = 0.5 * event.drag_coefficient * event.air_density * event.area * event.speed *
                     event.speed;
  Wrench w;
  for (int i = 0; i < 3; ++i) w.force[i] = mag * event.direction[i] / dn;
  const Vec3 fb = rotate_transpose(rotation_from_euler(attitude), w.force);
  w.torque = cross(Vec3{0.0, 0.0, event.lever}, fb);
  return w;
}

PlantSimulator::PlantSimulator(const PlantConfig& cfg, const NoiseModel& imu,
                               const VehicleState& x0, std::uint64_t seed,
                               std::optional<WindEvent> wind)
    : cfg_(cfg),
      noise_(imu, seed),
      plant_rng_(seed ^ 0x9e3779b97f4a7c15ULL),
      wind_(std::move(wind)),
      state_(x0),
      imu_stride_(std::llround(1.0 / (imu.rate_hz * cfg.dt))) {
  check_state(x0.to_array());
  if (imu_stride_ < 1) throw std::invalid_argument("IMU rate exceeds plant rate");
  last_applied_ = {cfg.params.mass * cfg.params.gravity, {}};
  attitude_history_.push_back(state_.attitude);
}

TruthSample PlantSimulator::truth_now(const ControlInput& applied) {
  TruthSample s;
  s.t = time();
  s.state = state_;
  const Wrench w = wind_ ? wind_wrench(*wind_, s.t, cfg_.dt, state_.attitude) : Wrench{};
  const auto dx = derivative(state_.to_array(), applied.to_array(), cfg_.params, w);
  s.accel_world = {dx[6], dx[7], dx[8]};
  s.sensed_attitude =
      inject_plant_noise(state_.attitude, cfg_.noise.attitude_sigma_rad(), plant_rng_);
  return s;
}

ImuSample PlantSimulator::current_sample() {
  const TruthSample truth = truth_now(last_applied_);
  ImuSample out = ideal_imu(truth, cfg_.params.gravity);
  const auto [gn, an] = noise_.next(noise_.period());
  out.gyro = add(out.gyro, gn);
  out.accel = add(out.accel, an);
  imu_history_.push_back(out);
  truth_history_.push_back(truth);
  return out;
}

std::vector<ImuSample> PlantSimulator::advance(const ControlInput& u, double duration) {
  const long long n = std::llround(duration / cfg_.dt);
  std::vector<ImuSample> out;
  for (long long i = 0; i < n; ++i) {
    const ControlInput applied =
        cfg_.limits.clamp(inject_plant_noise(u, cfg_.noise.control_sigma, plant_rng_));
    const Wrench w = wind_ ? wind_wrench(*wind_, time(), cfg_.dt, state_.attitude) : Wrench{};
    state_ = step(state_, applied, cfg_.params, cfg_.dt, w);
    ++step_index_;
    last_applied_ = applied;
    attitude_history_.push_back(state_.attitude);
    if (step_index_ % imu_stride_ == 0) out.push_back(current_sample());
  }
  return out;
}

void write_imu_csv(const std::string& path, const std::vector<ImuSample>& samples) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "t,gx,gy,gz,ax,ay,az\n" << std::setprecision(17);
  for (const ImuSample& s : samples) {
    f << s.t << ',' << s.gyro[0] << ',' << s.gyro[1] << ',' << s.gyro[2] << ',' << s.accel[0]
      << ',' << s.accel[1] << ',' << s.accel[2] << '\n';
  }
}

}  // namespace impc
