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


#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "impc/config.hpp"
#include "impc/dmpc.hpp"
#include "impc/dynamics.hpp"
#include "impc/errors.hpp"
#include "impc/harness.hpp"
#include "impc/io_net.hpp"
#include "impc/trainer.hpp"

namespace py = pybind11;

namespace impc {
namespace {

using State = std::array<double, kStateDim>;
using Control = std::array<double, kControlDim>;

VehicleParams<double> vehicle(double mass, const Vec3& inertia, double gravity) {
  VehicleParams<double> p;
  p.mass = mass;
  p.inertia = inertia;
  p.gravity = gravity;
  return p;
}

py::dict metrics_dict(const TrialMetrics& m) {
  py::dict d;
  d["settling_time"] = m.settling_time ? py::cast(*m.settling_time) : py::none();
  d["rmse_deg"] = m.rmse_deg;
  d["sse_deg"] = m.sse_deg;
  d["imu_rmse_rad"] = m.imu_rmse_rad;
  d["failed"] = m.failed;
  return d;
}

py::dict model_dict(const LearnedModel& m, double gravity) {
  const VehicleParams<double> p = m.params(gravity);
  py::dict d;
  d["mass"] = p.mass;
  d["inertia"] = p.inertia;
  d["use_network"] = m.use_network;
  return d;
}

State step_py(const State& x, const Control& u, double mass, const Vec3& inertia, double dt, double gravity) {
  return step(x, u, vehicle(mass, inertia, gravity), dt);
}

py::dict mpc_solve_py(const State& x, double mass, const Vec3& inertia, double gravity, int horizon, double dt) {
  MpcSettings s;
  s.horizon = horizon;
  s.dt = dt;
  const auto model = std::make_shared<QuadrotorModel>(vehicle(mass, inertia, gravity), dt);
  const Vec x0(std::vector<double>(x.begin(), x.end()));
  const MpcProblem prob = attitude_problem(model, s, x0, mass * gravity);
  const MpcSolution sol = ilqr_solve(prob, x0, s.solver);
  py::dict d;
  std::vector<std::vector<double>> xs, us;
  for (const Vec& v : sol.x) xs.push_back(v.values());
  for (const Vec& v : sol.u) us.push_back(v.values());
  d["x"] = xs;
  d["u"] = us;
  d["cost"] = sol.cost;
  d["iterations"] = sol.iterations;
  d["converged"] = sol.converged;
  return d;
}

py::dict train_py(const std::string& config_text, const std::string& method, const std::string& output_dir) {
  const Config c = parse_config(config_text);
  const TrainConfig tc = c.training_for(parse_method(method));
  TrainingResult r;
  {
    py::gil_scoped_release release;
    r = run_training(c.env, tc, output_dir);
  }
  py::dict d;
  d["best"] = model_dict(r.best, c.env.plant.params.gravity);
  d["final"] = model_dict(r.final_model, c.env.plant.params.gravity);
  d["best_step"] = r.best_step;
  std::vector<double> losses;
  for (const TrainStepRecord& rec : r.records) losses.push_back(rec.upper_loss);
  d["upper_loss"] = losses;
  return d;
}

py::dict simulate_py(const std::string& config_text, const std::string& method,
                     const std::optional<std::string>& checkpoint, const Vec3& initial_attitude_deg,
                     double seconds, std::uint64_t seed) {
  const Config c = parse_config(config_text);
  const Method m = parse_method(method);
  const bool net = learns_network(m);
  const LearnedModel model =
      checkpoint ? LearnedModel::from_checkpoint(load_checkpoint(*checkpoint), c.env.network, net)
                 : LearnedModel::initial(c.env, 1.0, 0, net);
  EpisodeSpec spec;
  for (int i = 0; i < 3; ++i) spec.initial_attitude[i] = initial_attitude_deg[i] * std::numbers::pi / 180.0;
  spec.seconds = seconds;
  spec.seed = seed;
  EpisodeResult e;
  {
    py::gil_scoped_release release;
    e = run_episode(c.env, model, spec);
  }
  py::dict d;
  d["dt"] = e.plant_dt;
  d["attitude"] = e.attitude;
  d["diverged"] = e.diverged;
  d["failure"] = e.failure;
  d["imu_rmse"] = e.imu_rmse();
  return d;
}

}  // namespace
}  // namespace impc

PYBIND11_MODULE(_core, m) {
  using namespace impc;
  m.doc() = "Native core of impc: dynamics, MPC, training and evaluation.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  m.def("default_config", [] { return to_json_text(Config{}); }, "Fully defaulted config as JSON text.");
  m.def("normalize_config", [](const std::string& text) { return to_json_text(parse_config(text)); },
        py::arg("text"), "Validates a config and returns it with every default filled in.");
  m.def("step", &step_py, py::arg("state"), py::arg("control"), py::arg("mass") = 1.0,
        py::arg("inertia") = Vec3{0.01, 0.01, 0.02}, py::arg("dt") = 1e-3, py::arg("gravity") = 9.81,
        "One RK4 step of the rigid-body model. State is [p, euler, v, omega].");
  m.def("mpc_solve", &mpc_solve_py, py::arg("state"), py::arg("mass") = 1.0,
        py::arg("inertia") = Vec3{0.01, 0.01, 0.02}, py::arg("gravity") = 9.81, py::arg("horizon") = 10,
        py::arg("dt") = 0.02, "Solves the attitude MPC problem from `state` with the default weights.");
  m.def(
      "compute_metrics",
      [](const std::vector<Vec3>& attitude, double dt, const Vec3& desired, double band_deg, double steady) {
        return metrics_dict(compute_metrics(attitude, dt, desired, band_deg, steady));
      },
      py::arg("attitude"), py::arg("dt"), py::arg("desired") = Vec3{}, py::arg("band_deg") = 1.5,
      py::arg("steady_window") = 0.5);
  m.def("train", &train_py, py::arg("config") = "{}", py::arg("method") = "impc", py::arg("output_dir") = "",
        "Runs online training for one method; writes logs and a checkpoint when output_dir is set.");
  m.def("simulate", &simulate_py, py::arg("config") = "{}", py::arg("method") = "impc",
        py::arg("checkpoint") = std::nullopt, py::arg("initial_attitude_deg") = Vec3{20.0, 20.0, 20.0},
        py::arg("seconds") = 2.0, py::arg("seed") = 0,
        "Closed-loop episode without learning. Without a checkpoint the true parameters are used.");
  m.def(
      "load_checkpoint",
      [](const std::string& path) {
        const Checkpoint c = load_checkpoint(path);
        py::dict d;
        d["mass"] = c.mass;
        d["inertia"] = c.inertia;
        d["seed"] = c.seed;
        d["step"] = c.step;
        return d;
      },
      py::arg("path"));
  m.attr("methods") = std::vector<std::string>{"imu_mpc", "imu_plus_mpc", "imu_mpc_plus", "impc"};
}
