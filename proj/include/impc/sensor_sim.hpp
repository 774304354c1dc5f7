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

// IMU measurement synthesis, plant-side noise, drag-equation wind, and the
// 1 kHz plant loop that produces 200 Hz IMU samples.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "impc/dynamics.hpp"

namespace impc {

struct ImuSample {
  double t = 0.0;
  Vec3 gyro{};   // rad/s, body
  Vec3 accel{};  // m/s^2, body specific force

  friend bool operator==(const ImuSample&, const ImuSample&) = default;
};

// One sensor triad. Densities are continuous-time; per-sample white sigma is
// density * sqrt(rate).
struct SensorNoise {
  double initial_bias = 0.0;      // 1-sigma turn-on bias, fixed per unit
  double bias_instability = 0.0;  // stationary sigma of the Gauss-Markov bias
  double correlation_time = 100.0;
  double white_density = 0.0;  // rad/s/sqrt(Hz) or m/s^2/sqrt(Hz)
};

struct NoiseModel {
  SensorNoise gyro;
  SensorNoise accel;
  double rate_hz = 200.0;
  std::uint64_t unit_seed = 1;  // draws the turn-on biases of this sensor unit

  // Epson G365-class datasheet values converted to SI.
  static NoiseModel epson_g365();
  static NoiseModel noise_free() { return {}; }
};

// Stateful noise generator for one run.
class ImuNoise {
 public:
  ImuNoise(const NoiseModel& model, std::uint64_t seed);

  // Advances the bias processes by dt and returns (gyro noise, accel noise).
  std::pair<Vec3, Vec3> next(double dt);

  const Vec3& gyro_bias() const { return gyro_bias_; }
  const Vec3& accel_bias() const { return accel_bias_; }
  double period() const { return 1.0 / model_.rate_hz; }

 private:
  NoiseModel model_;
  std::mt19937_64 rng_;
  Vec3 gyro_turn_on_{}, accel_turn_on_{};
  Vec3 gyro_bias_{}, accel_bias_{};
  Vec3 gyro_walk_{}, accel_walk_{};
};

// Sampled truth needed to synthesize IMU readings.
struct TruthSample {
  double t = 0.0;
  VehicleState state;
  Vec3 accel_world{};  // r'' in the world frame
  Vec3 sensed_attitude{};  // attitude used for the specific-force rotation
};

struct TrueTrajectory {
  std::vector<TruthSample> samples;  // strictly increasing t

  void push(const TruthSample& s);
  // Exact-match lookup within 1e-9 s; throws std::out_of_range otherwise.
  const TruthSample& at(double t) const;
};

// Measures the truth at time t and advances the noise processes.
ImuSample sample_imu(const TrueTrajectory& truth, ImuNoise& noise, double t, double gravity);

// Noise-free reading of a single truth sample.
ImuSample ideal_imu(const TruthSample& s, double gravity);

struct PlantNoise {
  double control_sigma = 1e-4;
  double attitude_sigma = 8.73e-2;
  std::string attitude_unit = "rad";  // "rad" or "deg"

  double attitude_sigma_rad() const;
};

double inject_plant_noise(double value, double sigma, std::mt19937_64& rng);
Vec3 inject_plant_noise(const Vec3& value, double sigma, std::mt19937_64& rng);
ControlInput inject_plant_noise(const ControlInput& u, double sigma, std::mt19937_64& rng);

enum class WindKind { kImpulse, kStep };

struct WindEvent {
  WindKind kind = WindKind::kStep;
  double start = 0.2;
  double duration = 0.3;  // ignored for impulses
  double speed = 0.0;
  Vec3 direction{-1.0, 0.0, 0.0};
  double drag_coefficient = 1.0;
  double air_density = 1.225;
  double area = 0.1;
  double lever = 0.02;  // along body z

  // Plant steps [first, last) during which the event is active.
  std::pair<long long, long long> active_steps(double plant_dt) const;
};

WindKind parse_wind_kind(const std::string& s);
std::string to_string(WindKind k);

// Force (world) and torque (body) at time t. The torque is lever*z_B x F with
// F expressed in the body frame of the given attitude.
Wrench wind_wrench(const WindEvent& event, double t, double plant_dt, const Vec3& attitude = {});

struct PlantConfig {
  VehicleParams<double> params;
  ActuatorLimits limits;
  double dt = 1e-3;
  PlantNoise noise;
};

// Runs the true vehicle at the plant rate and emits IMU samples on the IMU
// grid. The control input is held between calls to advance().
class PlantSimulator {
 public:
  PlantSimulator(const PlantConfig& cfg, const NoiseModel& imu, const VehicleState& x0,
                 std::uint64_t seed, std::optional<WindEvent> wind = std::nullopt);

  // Advances `duration` seconds under u; returns the IMU samples whose
  // timestamps fall in (t, t + duration]. Throws DivergenceError or
  // GimbalLockError if the vehicle is lost.
  std::vector<ImuSample> advance(const ControlInput& u, double duration);

  // Reading at the current time without advancing.
  ImuSample current_sample();

  const VehicleState& state() const { return state_; }
  double time() const { return step_index_ * cfg_.dt; }
  long long step_index() const { return step_index_; }
  const ImuNoise& imu_noise() const { return noise_; }

  // Attitude at every plant step, including t = 0.
  const std::vector<Vec3>& attitude_history() const { return attitude_history_; }
  const std::vector<ImuSample>& imu_history() const { return imu_history_; }
  // Truth at every IMU sample time, aligned with imu_history().
  const std::vector<TruthSample>& truth_history() const { return truth_history_; }

 private:
  TruthSample truth_now(const ControlInput& applied);

  PlantConfig cfg_;
  ImuNoise noise_;
  std::mt19937_64 plant_rng_;
  std::optional<WindEvent> wind_;
  VehicleState state_;
  long long step_index_ = 0;
  long long imu_stride_;
  ControlInput last_applied_;
  std::vector<Vec3> attitude_history_;
  std::vector<ImuSample> imu_history_;
  std::vector<TruthSample> truth_history_;
};

void write_imu_csv(const std::string& path, const std::vector<ImuSample>& samples);

}  // namespace impc
