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

// Learned IMU denoiser and differentiable attitude pre-integrator.

#include <cstdint>
#include <string>
#include <vector>

#include "impc/autodiff.hpp"
#include "impc/dynamics.hpp"
#include "impc/rotation.hpp"
#include "impc/sensor_sim.hpp"

namespace impc {

struct MlpConfig {
  std::vector<int> encoder{6, 64, 64, 32};  // tanh after every layer
  std::vector<int> decoder{32, 32, 6};      // tanh hidden, linear output
  double gyro_scale = 0.01;   // rad/s per unit output
  double accel_scale = 0.1;   // m/s^2 per unit output
  int window = 4;             // samples per control period
};

struct DenseLayer {
  int in = 0;
  int out = 0;
  bool activation = true;  // tanh
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;    // out
};

class MlpWeights {
 public:
  MlpWeights() = default;
  // Uniform(+-1/sqrt(fan_in)) init with a zero output layer.
  static MlpWeights initialize(const MlpConfig& cfg, std::uint64_t seed);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  void assign(const std::vector<double>& flat);
  // Throws DimensionError naming the first mismatching layer.
  void check_shapes(const MlpConfig& cfg) const;

  std::array<double, 6> forward(const std::array<double, 6>& features) const;

  friend bool operator==(const MlpWeights& a, const MlpWeights& b);

 private:
  std::vector<DenseLayer> layers_;
};

// The weights recorded as leaves on a tape, in flatten() order.
struct BoundMlp {
  const MlpWeights* weights = nullptr;
  std::vector<Var> params;

  static BoundMlp bind(Tape& tape, const MlpWeights& w);
  std::array<Var, 6> forward(const std::array<double, 6>& features) const;
  std::vector<double> gradient(const Gradient& g) const;
};

template <class S>
struct CorrectedSample {
  double t = 0.0;
  Vec3T<S> gyro{};
  Vec3T<S> accel{};
};

std::array<double, 6> imu_features(const ImuSample& s);

// corrected = raw + scale * MLP(features). Throws DimensionError when the
// window length differs from cfg.window.
std::vector<CorrectedSample<double>> denoise(const std::vector<ImuSample>& window,
                                             const MlpWeights& w, const MlpConfig& cfg);
std::vector<CorrectedSample<Var>> denoise(const std::vector<ImuSample>& window, const BoundMlp& w,
                                          const MlpConfig& cfg);
// Raw samples passed through unchanged (the classic integrator).
std::vector<CorrectedSample<double>> passthrough(const std::vector<ImuSample>& window);

template <class S>
struct AttitudeEstimate {
  double t = 0.0;
  Vec3T<S> euler{};
  double window_start = 0.0;  // first sample time consumed
  double window_end = 0.0;
};

// SO(3) gyro integrator. Each increment is the trapezoid of the previous and
// current rates plus the two-sample coning term, which is exact for rates
// that vary linearly between samples (torque held between control updates).
// The very first sample without history uses the rectangle rule.
template <class S>
class Preintegrator {
 public:
  Preintegrator() = default;
  Preintegrator(double t0, const Vec3T<S>& euler0);

  // Starts the history with a sample taken at t0.
  void seed_history(const Vec3T<S>& gyro);

  AttitudeEstimate<S> integrate(const std::vector<CorrectedSample<S>>& samples);

  double time() const { return t_; }
  const Rot<S>& rotation() const { return r_; }
  Vec3T<S> euler() const { return euler_from_rotation(r_); }
  const std::vector<Vec3T<S>>& history() const { return history_; }

  // Copies with every Var replaced by its value.
  Preintegrator<double> detached() const;
  // Lifts a plain integrator into constants of scalar type S.
  static Preintegrator<S> from(const Preintegrator<double>& p);

 private:
  template <class>
  friend class Preintegrator;
  double t_ = 0.0;
  Rot<S> r_{};
  std::vector<Vec3T<S>> history_;  // previous gyro reading, if any
};

extern template class Preintegrator<double>;
extern template class Preintegrator<Var>;

// Packs the estimated attitude and rate into a full state; the translational
// fields come from `truth`.
VehicleState estimate_state(const Vec3& euler, const Vec3& gyro, const VehicleState& truth);
template <class S>
StateVec<S> estimate_state(const Vec3T<S>& euler, const Vec3T<S>& gyro, const VehicleState& truth) {
  StateVec<S> x;
  for (int i = 0; i < 3; ++i) {
    x[i] = S(truth.position[i]);
    x[3 + i] = euler[i];
    x[6 + i] = S(truth.velocity[i]);
    x[9 + i] = gyro[i];
  }
  return x;
}

struct Checkpoint {
  MlpWeights weights;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  double mass = 1.0;
  Vec3 inertia{0.01, 0.01, 0.02};
};

// Format chosen by extension: ".json" for JSON, anything else binary.
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace impc
