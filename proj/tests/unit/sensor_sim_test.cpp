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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "impc/sensor_sim.hpp"

namespace impc {
namespace {

constexpr double kG = 9.81;

PlantConfig quiet_plant() {
  PlantConfig cfg;
  cfg.noise.control_sigma = 0.0;
  cfg.noise.attitude_sigma = 0.0;
  return cfg;
}

ControlInput hover(const PlantConfig& cfg) { return {cfg.params.mass * cfg.params.gravity, {}}; }

TEST(Imu, NoiseFreeHoverReadsGravityOnly) {
  const PlantConfig cfg = quiet_plant();
  PlantSimulator plant(cfg, NoiseModel::noise_free(), VehicleState{}, 3);
  const auto samples = plant.advance(hover(cfg), 0.1);
  ASSERT_EQ(samples.size(), 20u);
  for (const ImuSample& s : samples) {
    for (int i = 0; i < 3; ++i) EXPECT_EQ(s.gyro[i], 0.0);
    EXPECT_EQ(s.accel[0], 0.0);
    EXPECT_EQ(s.accel[1], 0.0);
    EXPECT_NEAR(s.accel[2], kG, 1e-12);
  }
}

TEST(Imu, ConstantYawRateIsReadExactly) {
  TruthSample t;
  t.state.body_rate = {0.0, 0.0, 1.0};
  const ImuSample s = ideal_imu(t, kG);
  EXPECT_EQ(s.gyro[0], 0.0);
  EXPECT_EQ(s.gyro[1], 0.0);
  EXPECT_EQ(s.gyro[2], 1.0);
}

TEST(Imu, SamplesLandOnTheImuGrid) {
  const PlantConfig cfg = quiet_plant();
  PlantSimulator plant(cfg, NoiseModel::epson_g365(), VehicleState{}, 3);
  const auto samples = plant.advance(hover(cfg), 0.02);
  ASSERT_EQ(samples.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(samples[i].t, 0.005 * (i + 1), 1e-12);
  EXPECT_EQ(plant.truth_history().size(), plant.imu_history().size());
}

TEST(Imu, AllanVarianceAtShortestClusterMatchesWhiteDensity) {
  const NoiseModel model = NoiseModel::epson_g365();
  ImuNoise noise(model, 11);
  const int n = 100000;
  const double dt = 1.0 / model.rate_hz;
  std::vector<Vec3> gyro(n), accel(n);
  for (int k = 0; k < n; ++k) std::tie(gyro[k], accel[k]) = noise.next(dt);
  for (int axis = 0; axis < 3; ++axis) {
    double g = 0.0, a = 0.0;
    for (int k = 0; k + 1 < n; ++k) {
      g += std::pow(gyro[k + 1][axis] - gyro[k][axis], 2);
      a += std::pow(accel[k + 1][axis] - accel[k][axis], 2);
    }
    const double avar_g = 0.5 * g / (n - 1);
    const double avar_a = 0.5 * a / (n - 1);
    // White noise: AVAR(tau0) = density^2 / tau0.
    const double want_g = model.gyro.white_density * model.gyro.white_density * model.rate_hz;
    const double want_a = model.accel.white_density * model.accel.white_density * model.rate_hz;
    EXPECT_NEAR(avar_g / want_g, 1.0, 0.1) << "gyro axis " << axis;
    EXPECT_NEAR(avar_a / want_a, 1.0, 0.1) << "accel axis " << axis;
  }
}

TEST(Imu, TurnOnBiasIsFixedPerUnitAndIndependentOfRunSeed) {
  NoiseModel model = NoiseModel::epson_g365();
  model.gyro.bias_instability = 0.0;
  ImuNoise a(model, 1), b(model, 2);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a.gyro_bias()[i], b.gyro_bias()[i]);
  model.unit_seed = 2;
  ImuNoise c(model, 1);
  EXPECT_NE(a.gyro_bias()[0], c.gyro_bias()[0]);
}

TEST(Imu, StreamIsDeterministicPerSeed) {
  const PlantConfig cfg;
  VehicleState x0;
  x0.attitude = {0.1, -0.1, 0.05};
  PlantSimulator a(cfg, NoiseModel::epson_g365(), x0, 7);
  PlantSimulator b(cfg, NoiseModel::epson_g365(), x0, 7);
  PlantSimulator c(cfg, NoiseModel::epson_g365(), x0, 8);
  const ControlInput u{10.0, {0.001, 0.0, -0.001}};
  const auto sa = a.advance(u, 0.2);
  const auto sb = b.advance(u, 0.2);
  const auto sc = c.advance(u, 0.2);
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(a.state(), b.state());
  EXPECT_NE(sa, sc);
}

TEST(Imu, TruthLookupRejectsUnknownTimes) {
  TrueTrajectory truth;
  TruthSample s;
  s.t = 0.005;
  truth.push(s);
  EXPECT_NO_THROW(truth.at(0.005));
  EXPECT_THROW(truth.at(0.006), std::out_of_range);
  EXPECT_THROW(truth.push(s), std::invalid_argument);
}

TEST(Imu, NoiseFreeSampleEqualsIdealReading) {
  TrueTrajectory truth;
  TruthSample s;
  s.t = 0.01;
  s.state.attitude = {0.2, -0.1, 0.3};
  s.sensed_attitude = s.state.attitude;
  s.state.body_rate = {0.3, 0.2, -0.1};
  s.accel_world = {1.0, -2.0, 0.5};
  truth.push(s);
  ImuNoise noise(NoiseModel::noise_free(), 1);
  EXPECT_EQ(sample_imu(truth, noise, 0.01, kG), ideal_imu(s, kG));
}

TEST(Imu, WritesCsv) {
  const auto path = std::filesystem::temp_directory_path() / "impc_imu_test.csv";
  write_imu_csv(path.string(), {{0.005, {1, 2, 3}, {4, 5, 6}}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "t,gx,gy,gz,ax,ay,az");
  EXPECT_EQ(std::stod(row.substr(0, row.find(','))), 0.005);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 6);
  std::filesystem::remove(path);
}

TEST(PlantNoise, ZeroSigmaIsIdentity) {
  std::mt19937_64 rng(1);
  const ControlInput u{9.0, {0.1, -0.2, 0.3}};
  EXPECT_EQ(inject_plant_noise(u, 0.0, rng), u);
  EXPECT_EQ(inject_plant_noise(1.25, 0.0, rng), 1.25);
}

TEST(PlantNoise, SampleSigmaMatchesConfigured) {
  std::mt19937_64 rng(5);
  const double sigma = 1e-4;
  const int n = 1000000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = inject_plant_noise(0.0, sigma, rng);
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  EXPECT_NEAR(sd / sigma, 1.0, 0.01);
  EXPECT_NEAR(mean, 0.0, 5.0 * sigma / std::sqrt(n));
}

TEST(PlantNoise, AttitudeSigmaUnitConversion) {
  PlantNoise n;
  EXPECT_EQ(n.attitude_sigma_rad(), 8.73e-2);
  n.attitude_unit = "deg";
  EXPECT_DOUBLE_EQ(n.attitude_sigma_rad(), 8.73e-2 * std::numbers::pi / 180.0);
  n.attitude_unit = "grad";
  EXPECT_THROW(n.attitude_sigma_rad(), std::invalid_argument);
}

TEST(PlantNoise, SameSeedSameSequence) {
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(inject_plant_noise(Vec3{}, 0.1, a), inject_plant_noise(Vec3{}, 0.1, b));
  }
}

TEST(Wind, DragForceAtTenMetersPerSecond) {
  WindEvent w;
  w.speed = 10.0;
  const Wrench f = wind_wrench(w, 0.3, 1e-3);
  // 0.5 * 1.0 * 1.225 * 0.1 * 10^2
  EXPECT_NEAR(f.force[0], -6.125, 1e-12);
  EXPECT_EQ(f.force[1], 0.0);
  EXPECT_EQ(f.force[2], 0.0);
  // z_B x F at level attitude with F along -x: torque about -y.
  EXPECT_NEAR(f.torque[1], -0.02 * 6.125, 1e-12);
}

TEST(Wind, ZeroSpeedGivesZeroWrench) {
  WindEvent w;
  const Wrench f = wind_wrench(w, 0.3, 1e-3);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(f.force[i], 0.0);
    EXPECT_EQ(f.torque[i], 0.0);
  }
}

TEST(Wind, ForceScalesWithSpeedSquared) {
  WindEvent w;
  w.speed = 7.0;
  const double f1 = wind_wrench(w, 0.3, 1e-3).force[0];
  w.speed = 14.0;
  const double f2 = wind_wrench(w, 0.3, 1e-3).force[0];
  EXPECT_NEAR(f2 / f1, 4.0, 1e-12);
}

int active_count(const WindEvent& w, double dt) {
  int n = 0;
  for (int i = 0; i < 2000; ++i) {
    if (wind_wrench(w, i * dt, dt).force[0] != 0.0) ++n;
  }
  return n;
}

TEST(Wind, StepLastsItsDurationInPlantSteps) {
  WindEvent w;
  w.speed = 10.0;
  EXPECT_EQ(active_count(w, 1e-3), 300);
  EXPECT_EQ(w.active_steps(1e-3), std::make_pair(200LL, 500LL));
}

TEST(Wind, ImpulseLastsOnePlantStep) {
  WindEvent w;
  w.kind = WindKind::kImpulse;
  w.speed = 10.0;
  EXPECT_EQ(active_count(w, 1e-3), 1);
}

TEST(Wind, KindParsing) {
  EXPECT_EQ(parse_wind_kind("impulse"), WindKind::kImpulse);
  EXPECT_EQ(parse_wind_kind("step"), WindKind::kStep);
  EXPECT_EQ(to_string(WindKind::kStep), "step");
  EXPECT_THROW(parse_wind_kind("gust"), std::invalid_argument);
}

TEST(Wind, PushesTheHoveringVehicle) {
  const PlantConfig cfg = quiet_plant();
  WindEvent w;
  w.speed = 10.0;
  PlantSimulator plant(cfg, NoiseModel::noise_free(), VehicleState{}, 1, w);
  plant.advance(hover(cfg), 0.6);
  EXPECT_LT(plant.state().velocity[0], -1.0);
}

}  // namespace
}  // namespace impc
