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


#include "impc/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "impc/errors.hpp"

namespace impc {
namespace {

using nlohmann::json;

std::string join(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

// Visits an object, applying a handler per known key and rejecting the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <class F>
  Reader& field(const std::string& key, F&& apply) {
    known_.insert(key);
    if (j_.contains(key)) apply(j_.at(key), join(path_, key));
    return *this;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!known_.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

double positive(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (!(v > 0.0)) throw ConfigError(path, "must be > 0");
  return v;
}

double non_negative(const json& j, const std::string& path) {
  const double v = number(j, path);
  if (v < 0.0) throw ConfigError(path, "must be >= 0");
  return v;
}

long long integer(const json& j, const std::string& path, long long lo) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  const long long v = j.get<long long>();
  if (v < lo) throw ConfigError(path, "must be >= " + std::to_string(lo));
  return v;
}

std::uint64_t unsigned_integer(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0)) {
    throw ConfigError(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

Vec3 vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(path, "expected an array of 3 numbers");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]"), number(j[2], path + "[2]")};
}

std::vector<double> numbers(const json& j, const std::string& path, bool allow_empty = false) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  if (j.empty() && !allow_empty) throw ConfigError(path, "must not be empty");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(non_negative(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<int> widths(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() < 2) throw ConfigError(path, "expected at least 2 layer widths");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(static_cast<int>(integer(j[i], path + "[" + std::to_string(i) + "]", 1)));
  }
  return out;
}

std::vector<Method> methods(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a non-empty array of methods");
  std::vector<Method> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    try {
      out.push_back(parse_method(text(j[i], p)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(p, e.what());
    }
  }
  return out;
}

void read_sensor(const json& j, const std::string& path, SensorNoise& s) {
  Reader(j, path)
      .field("initial_bias", [&](const json& v, const std::string& p) { s.initial_bias = non_negative(v, p); })
      .field("bias_instability",
             [&](const json& v, const std::string& p) { s.bias_instability = non_negative(v, p); })
      .field("correlation_time",
             [&](const json& v, const std::string& p) { s.correlation_time = positive(v, p); })
      .field("white_density", [&](const json& v, const std::string& p) { s.white_density = non_negative(v, p); })
      .finish();
}

json sensor_json(const SensorNoise& s) {
  return {{"initial_bias", s.initial_bias},
          {"bias_instability", s.bias_instability},
          {"correlation_time", s.correlation_time},
          {"white_density", s.white_density}};
}

json methods_json(const std::vector<Method>& ms) {
  json a = json::array();
  for (Method m : ms) a.push_back(to_string(m));
  return a;
}

void read_vehicle(const json& j, const std::string& path, Config& c) {
  VehicleParams<double>& p = c.env.plant.params;
  ActuatorLimits& lim = c.env.plant.limits;
  Reader(j, path)
      .field("mass", [&](const json& v, const std::string& q) { p.mass = positive(v, q); })
      .field("inertia",
             [&](const json& v, const std::string& q) {
               p.inertia = vec3(v, q);
               for (int i = 0; i < 3; ++i) {
                 if (!(p.inertia[i] > 0.0)) {
                   throw ConfigError(q + "[" + std::to_string(i) + "]", "must be > 0");
                 }
               }
             })
      .field("gravity", [&](const json& v, const std::string& q) { p.gravity = positive(v, q); })
      .field("thrust_min", [&](const json& v, const std::string& q) { lim.thrust_min = non_negative(v, q); })
      .field("thrust_max", [&](const json& v, const std::string& q) { lim.thrust_max = positive(v, q); })
      .field("torque_max", [&](const json& v, const std::string& q) { lim.torque_max = positive(v, q); })
      .field("plant_dt", [&](const json& v, const std::string& q) { c.env.plant.dt = positive(v, q); })
      .finish();
  if (!(lim.thrust_max > lim.thrust_min)) {
    throw ConfigError(join(path, "thrust_max"), "must exceed thrust_min");
  }
  if (!(lim.thrust_max > p.mass * p.gravity)) {
    throw ConfigError(join(path, "thrust_max"), "cannot hold hover (must exceed mass * gravity)");
  }
}

void read_mpc(const json& j, const std::string& path, MpcSettings& m) {
  Reader(j, path)
      .field("horizon", [&](const json& v, const std::string& q) { m.horizon = static_cast<int>(integer(v, q, 2)); })
      .field("dt", [&](const json& v, const std::string& q) { m.dt = positive(v, q); })
      .field("weights",
             [&](const json& v, const std::string& q) {
               CostDefaults& w = m.weights;
               Reader(v, q)
                   .field("position", [&](const json& x, const std::string& r) { w.position = non_negative(x, r); })
                   .field("attitude", [&](const json& x, const std::string& r) { w.attitude = non_negative(x, r); })
                   .field("velocity", [&](const json& x, const std::string& r) { w.velocity = non_negative(x, r); })
                   .field("rate", [&](const json& x, const std::string& r) { w.rate = non_negative(x, r); })
                   .field("thrust", [&](const json& x, const std::string& r) { w.thrust = positive(x, r); })
                   .field("torque", [&](const json& x, const std::string& r) { w.torque = positive(x, r); })
                   .finish();
             })
      .field("solver",
             [&](const json& v, const std::string& q) {
               SolverOptions& s = m.solver;
               Reader(v, q)
                   .field("max_iterations",
                          [&](const json& x, const std::string& r) { s.max_iterations = static_cast<int>(integer(x, r, 1)); })
                   .field("tolerance", [&](const json& x, const std::string& r) { s.tolerance = positive(x, r); })
                   .field("initial_regularization",
                          [&](const json& x, const std::string& r) { s.initial_regularization = positive(x, r); })
                   .field("min_regularization",
                          [&](const json& x, const std::string& r) { s.min_regularization = positive(x, r); })
                   .field("max_regularization",
                          [&](const json& x, const std::string& r) { s.max_regularization = positive(x, r); })
                   .field("armijo", [&](const json& x, const std::string& r) { s.armijo = positive(x, r); })
                   .field("line_search_steps",
                          [&](const json& x, const std::string& r) { s.line_search_steps = static_cast<int>(integer(x, r, 1)); })
                   .finish();
             })
      .finish();
}

void read_training(const json& j, const std::string& path, Config& c) {
  TrainConfig& t = c.training;
  Reader(j, path)
      .field("methods", [&](const json& v, const std::string& q) { c.train_methods = methods(v, q); })
      .field("steps", [&](const json& v, const std::string& q) { t.steps = static_cast<int>(integer(v, q, 0)); })
      .field("episode_seconds", [&](const json& v, const std::string& q) { t.episode_seconds = positive(v, q); })
      .field("initial_attitude_deg",
             [&](const json& v, const std::string& q) { t.initial_attitude_deg = non_negative(v, q); })
      .field("network_lr", [&](const json& v, const std::string& q) { t.network_lr = non_negative(v, q); })
      .field("mass_lr", [&](const json& v, const std::string& q) { t.mass_lr = non_negative(v, q); })
      .field("inertia_lr", [&](const json& v, const std::string& q) { t.inertia_lr = non_negative(v, q); })
      .field("cost_lr", [&](const json& v, const std::string& q) { t.cost_lr = non_negative(v, q); })
      .field("learn_cost", [&](const json& v, const std::string& q) { t.learn_cost = boolean(v, q); })
      .field("initial_param_scale",
             [&](const json& v, const std::string& q) { t.initial_param_scale = positive(v, q); })
      .field("validation_every",
             [&](const json& v, const std::string& q) { t.validation_every = static_cast<int>(integer(v, q, 1)); })
      .field("validation_seeds",
             [&](const json& v, const std::string& q) { t.validation_seeds = static_cast<int>(integer(v, q, 1)); })
      .field("validation_seconds",
             [&](const json& v, const std::string& q) { t.validation_seconds = positive(v, q); })
      .field("checkpoint_format",
             [&](const json& v, const std::string& q) {
               t.checkpoint_format = text(v, q);
               if (t.checkpoint_format != "json" && t.checkpoint_format != "binary") {
                 throw ConfigError(q, "must be \"json\" or \"binary\"");
               }
             })
      .field("loss",
             [&](const json& v, const std::string& q) {
               UpperLossWeights& w = t.loss;
               Reader(v, q)
                   .field("position", [&](const json& x, const std::string& r) { w.position = non_negative(x, r); })
                   .field("attitude", [&](const json& x, const std::string& r) { w.attitude = non_negative(x, r); })
                   .field("velocity", [&](const json& x, const std::string& r) { w.velocity = non_negative(x, r); })
                   .field("rate", [&](const json& x, const std::string& r) { w.rate = non_negative(x, r); })
                   .field("auxiliary", [&](const json& x, const std::string& r) { w.auxiliary = non_negative(x, r); })
                   .finish();
             })
      .finish();
}

}  // namespace

TrainConfig Config::training_for(Method m) const {
  TrainConfig t = training;
  t.method = m;
  t.seed = seed;
  return t;
}

std::uint64_t Config::evaluation_seed() const { return trial_seed(seed ^ 0xe7a1e7a1ULL, 1000); }

ThresholdConfig Config::threshold_config() const {
  ThresholdConfig t = threshold;
  t.base = wind;
  t.seed = trial_seed(seed ^ 0x7e5e7e5eULL, 0);
  return t;
}

Config parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  Config c;
  Reader(j, "")
      .field("seed", [&](const json& v, const std::string& p) { c.seed = unsigned_integer(v, p); })
      .field("output_dir",
             [&](const json& v, const std::string& p) {
               c.output_dir = text(v, p);
               if (c.output_dir.empty()) throw ConfigError(p, "must not be empty");
             })
      .field("threads", [&](const json& v, const std::string& p) { c.threads = static_cast<int>(integer(v, p, 0)); })
      .field("vehicle", [&](const json& v, const std::string& p) { read_vehicle(v, p, c); })
      .field("plant_noise",
             [&](const json& v, const std::string& p) {
               PlantNoise& n = c.env.plant.noise;
               Reader(v, p)
                   .field("control_sigma", [&](const json& x, const std::string& q) { n.control_sigma = non_negative(x, q); })
                   .field("attitude_sigma",
                          [&](const json& x, const std::string& q) { n.attitude_sigma = non_negative(x, q); })
                   .field("attitude_unit",
                          [&](const json& x, const std::string& q) {
                            n.attitude_unit = text(x, q);
                            if (n.attitude_unit != "rad" && n.attitude_unit != "deg") {
                              throw ConfigError(q, "must be \"rad\" or \"deg\"");
                            }
                          })
                   .finish();
             })
      .field("imu",
             [&](const json& v, const std::string& p) {
               NoiseModel& m = c.env.imu;
               Reader(v, p)
                   .field("rate_hz", [&](const json& x, const std::string& q) { m.rate_hz = positive(x, q); })
                   .field("unit_seed", [&](const json& x, const std::string& q) { m.unit_seed = unsigned_integer(x, q); })
                   .field("gyro", [&](const json& x, const std::string& q) { read_sensor(x, q, m.gyro); })
                   .field("accel", [&](const json& x, const std::string& q) { read_sensor(x, q, m.accel); })
                   .finish();
             })
      .field("wind",
             [&](const json& v, const std::string& p) {
               WindEvent& w = c.wind;
               Reader(v, p)
                   .field("start", [&](const json& x, const std::string& q) { w.start = non_negative(x, q); })
                   .field("duration", [&](const json& x, const std::string& q) { w.duration = positive(x, q); })
                   .field("direction",
                          [&](const json& x, const std::string& q) {
                            w.direction = vec3(x, q);
                            if (w.direction == Vec3{}) throw ConfigError(q, "must be nonzero");
                          })
                   .field("drag_coefficient",
                          [&](const json& x, const std::string& q) { w.drag_coefficient = non_negative(x, q); })
                   .field("air_density", [&](const json& x, const std::string& q) { w.air_density = non_negative(x, q); })
                   .field("area", [&](const json& x, const std::string& q) { w.area = non_negative(x, q); })
                   .field("lever", [&](const json& x, const std::string& q) { w.lever = number(x, q); })
                   .finish();
             })
      .field("mpc", [&](const json& v, const std::string& p) { read_mpc(v, p, c.env.mpc); })
      .field("network",
             [&](const json& v, const std::string& p) {
               MlpConfig& n = c.env.network;
               Reader(v, p)
                   .field("encoder", [&](const json& x, const std::string& q) { n.encoder = widths(x, q); })
                   .field("decoder", [&](const json& x, const std::string& q) { n.decoder = widths(x, q); })
                   .field("gyro_scale", [&](const json& x, const std::string& q) { n.gyro_scale = non_negative(x, q); })
                   .field("accel_scale", [&](const json& x, const std::string& q) { n.accel_scale = non_negative(x, q); })
                   .field("window", [&](const json& x, const std::string& q) { n.window = static_cast<int>(integer(x, q, 1)); })
                   .finish();
               if (n.encoder.front() != 6) throw ConfigError(join(p, "encoder[0]"), "input width must be 6");
               if (n.decoder.back() != 6) throw ConfigError(join(p, "decoder"), "output width must be 6");
               if (n.decoder.front() != n.encoder.back()) {
                 throw ConfigError(join(p, "decoder[0]"), "must equal the last encoder width");
               }
             })
      .field("training", [&](const json& v, const std::string& p) { read_training(v, p, c); })
      .field("evaluation",
             [&](const json& v, const std::string& p) {
               EvaluationConfig& e = c.evaluation;
               Reader(v, p)
                   .field("trials", [&](const json& x, const std::string& q) { e.trials = static_cast<int>(integer(x, q, 1)); })
                   .field("episode_seconds",
                          [&](const json& x, const std::string& q) {
                            e.episode_seconds = positive(x, q);
                            if (e.episode_seconds < 0.5) throw ConfigError(q, "must be >= 0.5");
                          })
                   .field("initial_attitudes_deg",
                          [&](const json& x, const std::string& q) { e.initial_attitudes_deg = numbers(x, q, true); })
                   .field("wind_speeds", [&](const json& x, const std::string& q) { e.wind_speeds = numbers(x, q, true); })
                   .field("methods", [&](const json& x, const std::string& q) { e.methods = methods(x, q); })
                   .finish();
             })
      .field("threshold",
             [&](const json& v, const std::string& p) {
               ThresholdConfig& t = c.threshold;
               Reader(v, p)
                   .field("cap", [&](const json& x, const std::string& q) { t.cap = positive(x, q); })
                   .field("resolution", [&](const json& x, const std::string& q) { t.resolution = positive(x, q); })
                   .field("seconds", [&](const json& x, const std::string& q) { t.seconds = positive(x, q); })
                   .finish();
             })
      .field("sweep",
             [&](const json& v, const std::string& p) {
               SweepConfig& s = c.sweep;
               Reader(v, p)
                   .field("max_speed", [&](const json& x, const std::string& q) { s.max_speed = positive(x, q); })
                   .field("speed_step", [&](const json& x, const std::string& q) { s.speed_step = positive(x, q); })
                   .finish();
             })
      .finish();

  // Cross-field checks.
  c.env.mpc.limits = c.env.plant.limits;
  c.env.control_dt = c.env.mpc.dt;
  const double ratio = c.env.mpc.dt / c.env.plant.dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw ConfigError("mpc.dt", "must be a multiple of vehicle.plant_dt");
  }
  const double imu_ratio = 1.0 / (c.env.imu.rate_hz * c.env.plant.dt);
  if (std::abs(imu_ratio - std::round(imu_ratio)) > 1e-9 || imu_ratio < 1.0) {
    throw ConfigError("imu.rate_hz", "IMU period must be a multiple of vehicle.plant_dt");
  }
  const double per_window = c.env.mpc.dt * c.env.imu.rate_hz;
  if (std::abs(per_window - c.env.network.window) > 1e-9) {
    throw ConfigError("network.window", "must equal the IMU samples per control period (" +
                                            std::to_string(std::llround(per_window)) + ")");
  }
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path, "cannot read config file");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string to_json_text(const Config& c) {
  const VehicleParams<double>& p = c.env.plant.params;
  const ActuatorLimits& lim = c.env.plant.limits;
  const MpcSettings& m = c.env.mpc;
  const TrainConfig& t = c.training;
  const json j = {
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"threads", c.threads},
      {"vehicle",
       {{"mass", p.mass},
        {"inertia", {p.inertia[0], p.inertia[1], p.inertia[2]}},
        {"gravity", p.gravity},
        {"thrust_min", lim.thrust_min},
        {"thrust_max", lim.thrust_max},
        {"torque_max", lim.torque_max},
        {"plant_dt", c.env.plant.dt}}},
      {"plant_noise",
       {{"control_sigma", c.env.plant.noise.control_sigma},
        {"attitude_sigma", c.env.plant.noise.attitude_sigma},
        {"attitude_unit", c.env.plant.noise.attitude_unit}}},
      {"imu",
       {{"rate_hz", c.env.imu.rate_hz},
        {"unit_seed", c.env.imu.unit_seed},
        {"gyro", sensor_json(c.env.imu.gyro)},
        {"accel", sensor_json(c.env.imu.accel)}}},
      {"wind",
       {{"start", c.wind.start},
        {"duration", c.wind.duration},
        {"direction", {c.wind.direction[0], c.wind.direction[1], c.wind.direction[2]}},
        {"drag_coefficient", c.wind.drag_coefficient},
        {"air_density", c.wind.air_density},
        {"area", c.wind.area},
        {"lever", c.wind.lever}}},
      {"mpc",
       {{"horizon", m.horizon},
        {"dt", m.dt},
        {"weights",
         {{"position", m.weights.position},
          {"attitude", m.weights.attitude},
          {"velocity", m.weights.velocity},
          {"rate", m.weights.rate},
          {"thrust", m.weights.thrust},
          {"torque", m.weights.torque}}},
        {"solver",
         {{"max_iterations", m.solver.max_iterations},
          {"tolerance", m.solver.tolerance},
          {"initial_regularization", m.solver.initial_regularization},
          {"min_regularization", m.solver.min_regularization},
          {"max_regularization", m.solver.max_regularization},
          {"armijo", m.solver.armijo},
          {"line_search_steps", m.solver.line_search_steps}}}}},
      {"network",
       {{"encoder", c.env.network.encoder},
        {"decoder", c.env.network.decoder},
        {"gyro_scale", c.env.network.gyro_scale},
        {"accel_scale", c.env.network.accel_scale},
        {"window", c.env.network.window}}},
      {"training",
       {{"methods", methods_json(c.train_methods)},
        {"steps", t.steps},
        {"episode_seconds", t.episode_seconds},
        {"initial_attitude_deg", t.initial_attitude_deg},
        {"network_lr", t.network_lr},
        {"mass_lr", t.mass_lr},
        {"inertia_lr", t.inertia_lr},
        {"cost_lr", t.cost_lr},
        {"learn_cost", t.learn_cost},
        {"initial_param_scale", t.initial_param_scale},
        {"validation_every", t.validation_every},
        {"validation_seeds", t.validation_seeds},
        {"validation_seconds", t.validation_seconds},
        {"checkpoint_format", t.checkpoint_format},
        {"loss",
         {{"position", t.loss.position},
          {"attitude", t.loss.attitude},
          {"velocity", t.loss.velocity},
          {"rate", t.loss.rate},
          {"auxiliary", t.loss.auxiliary}}}}},
      {"evaluation",
       {{"trials", c.evaluation.trials},
        {"episode_seconds", c.evaluation.episode_seconds},
        {"initial_attitudes_deg", c.evaluation.initial_attitudes_deg},
        {"wind_speeds", c.evaluation.wind_speeds},
        {"methods", methods_json(c.evaluation.methods)}}},
      {"threshold",
       {{"cap", c.threshold.cap}, {"resolution", c.threshold.resolution}, {"seconds", c.threshold.seconds}}},
      {"sweep", {{"max_speed", c.sweep.max_speed}, {"speed_step", c.sweep.speed_step}}},
  };
  return j.dump(2) + "\n";
}

}  // namespace impc
