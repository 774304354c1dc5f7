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


// impc: train / evaluate / sweep / threshold / plot driven by one config.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or input error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "impc/config.hpp"
#include "impc/harness.hpp"

namespace fs = std::filesystem;

namespace impc {
namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string output_dir;
};

// Flag beats IMPC_OUTPUT_DIR beats the config value.
Config resolve(const std::string& path, const Overrides& o) {
  Config c = load_config(path);
  if (o.seed) c.seed = *o.seed;
  if (const char* env = std::getenv("IMPC_OUTPUT_DIR"); env && *env) c.output_dir = env;
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  return c;
}

fs::path prepare_run_dir(const Config& c) {
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  std::ofstream f(dir / "effective-config");
  if (!f) throw std::runtime_error("cannot write " + (dir / "effective-config").string());
  f << to_json_text(c);
  return dir;
}

std::optional<fs::path> find_checkpoint(const fs::path& dir, Method m) {
  const std::string stem = "checkpoint-" + to_string(m);
  for (const fs::path& base : {dir / to_string(m), dir}) {
    for (const char* ext : {".json", ".bin"}) {
      const fs::path p = base / (stem + ext);
      if (fs::exists(p)) return p;
    }
  }
  return std::nullopt;
}

ModelSet load_models(const Config& c, const std::vector<Method>& methods, const fs::path& dir) {
  ModelSet out;
  for (Method m : methods) {
    const auto path = find_checkpoint(dir, m);
    if (!path) {
      throw ConfigError("checkpoints", "no checkpoint for method " + to_string(m) + " under " +
                                           dir.string());
    }
    try {
      out[m] = LearnedModel::from_checkpoint(load_checkpoint(path->string()), c.env.network,
                                             learns_network(m));
    } catch (const DimensionError& e) {
      throw ConfigError(path->string(), std::string("incompatible with network config: ") + e.what());
    }
  }
  return out;
}

int cmd_train(const Config& c) {
  const fs::path dir = prepare_run_dir(c);
  std::ofstream summary(dir / "train-summary.csv");
  summary << "method,mass,jxx,jyy,jzz,mass_error_pct,jxx_error_pct,jyy_error_pct,jzz_error_pct,best_step\n"
          << std::setprecision(10);
  const VehicleParams<double>& truth = c.env.plant.params;
  for (Method m : c.train_methods) {
    std::cerr << "training " << to_string(m) << " (" << c.training.steps << " steps)\n";
    const TrainingResult r = run_training(c.env, c.training_for(m), (dir / to_string(m)).string());
    const VehicleParams<double> p = r.best.params(truth.gravity);
    summary << to_string(m) << ',' << p.mass << ',' << p.inertia[0] << ',' << p.inertia[1] << ','
            << p.inertia[2] << ',' << 100.0 * std::abs(p.mass / truth.mass - 1.0);
    for (int i = 0; i < 3; ++i) summary << ',' << 100.0 * std::abs(p.inertia[i] / truth.inertia[i] - 1.0);
    summary << ',' << r.best_step << '\n';
    std::cout << to_string(m) << ": mass " << p.mass << " J (" << p.inertia[0] << ", " << p.inertia[1]
              << ", " << p.inertia[2] << ") best step " << r.best_step << '\n';
  }
  return 0;
}

void write_grid(const fs::path& dir, const std::string& name, const GridResult& g) {
  write_results_csv((dir / (name + ".csv")).string(), g.reports);
  write_results_json((dir / (name + ".json")).string(), g.reports);
  fs::create_directories(dir / "traces");
  for (const TrialTrace& t : g.traces) {
    write_trace_csv((dir / "traces" / (scenario_stem(t.method, t.condition) + ".csv")).string(), t);
  }
}

std::vector<Scenario> keep(std::vector<Scenario> grid, const EvaluationConfig& e) {
  std::vector<Scenario> out;
  for (Scenario& s : grid) {
    if (std::find(e.methods.begin(), e.methods.end(), s.method) == e.methods.end()) continue;
    s.seconds = e.episode_seconds;
    out.push_back(std::move(s));
  }
  return out;
}

int cmd_evaluate(const Config& c, const fs::path& checkpoints) {
  const ModelSet models = load_models(c, c.evaluation.methods, checkpoints);
  const fs::path dir = prepare_run_dir(c);
  const EvaluationConfig& e = c.evaluation;
  if (!e.initial_attitudes_deg.empty()) {
    const auto grid = keep(initial_condition_grid(e.trials, c.evaluation_seed(), e.initial_attitudes_deg), e);
    std::cerr << "initial-condition grid: " << grid.size() << " scenarios x " << e.trials << " trials\n";
    write_grid(dir, "initial_conditions", run_grid(c.env, grid, models, c.threads));
  }
  if (!e.wind_speeds.empty()) {
    const auto grid = keep(wind_grid(e.trials, c.evaluation_seed(), e.wind_speeds, c.wind), e);
    std::cerr << "wind grid: " << grid.size() << " scenarios x " << e.trials << " trials\n";
    write_grid(dir, "wind", run_grid(c.env, grid, models, c.threads));
  }
  return 0;
}

int cmd_sweep(const Config& c, const fs::path& checkpoints) {
  const ModelSet models = load_models(c, c.evaluation.methods, checkpoints);
  const fs::path dir = prepare_run_dir(c);
  const ThresholdConfig t = c.threshold_config();
  std::ofstream f(dir / "sweep.csv");
  f << "method,kind,speed,survived\n";
  for (Method m : c.evaluation.methods) {
    for (WindKind k : {WindKind::kImpulse, WindKind::kStep}) {
      for (double v = 0.0; v <= c.sweep.max_speed + 1e-9; v += c.sweep.speed_step) {
        WindEvent w = t.base;
        w.kind = k;
        w.speed = v;
        f << to_string(m) << ',' << to_string(k) << ',' << v << ','
          << survives(c.env, models.at(m), w, t.seconds, t.seed) << '\n';
      }
    }
  }
  return 0;
}

int cmd_threshold(const Config& c, const fs::path& checkpoints, const std::string& kind,
                  const std::string& method) {
  std::vector<Method> methods = c.evaluation.methods;
  if (!method.empty()) methods = {parse_method(method)};
  std::vector<WindKind> kinds{WindKind::kImpulse, WindKind::kStep};
  if (kind != "both") kinds = {parse_wind_kind(kind)};
  const ModelSet models = load_models(c, methods, checkpoints);
  const fs::path dir = prepare_run_dir(c);
  const ThresholdConfig t = c.threshold_config();
  std::ofstream f(dir / "thresholds.csv");
  f << "method,kind,threshold_mps,cap_mps,probes,monotone\n";
  for (Method m : methods) {
    for (WindKind k : kinds) {
      const ThresholdResult r = find_failure_threshold(c.env, models.at(m), k, t);
      f << to_string(m) << ',' << to_string(k) << ','
        << (r.threshold ? std::to_string(*r.threshold) : "") << ',' << t.cap << ',' << r.trace.size()
        << ',' << r.monotone() << '\n';
      std::cout << to_string(m) << ' ' << to_string(k) << ": ";
      if (r.threshold) {
        std::cout << "loses control at " << *r.threshold << " m/s\n";
      } else {
        std::cout << "no failure <= cap (" << t.cap << " m/s)\n";
      }
    }
  }
  return 0;
}

int cmd_plot(const fs::path& results, const std::string& out) {
  const fs::path traces = results / "traces";
  if (!fs::is_directory(traces)) {
    throw ConfigError(traces.string(), "no traces directory; run evaluate first");
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(traces)) {
    if (e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TrialTrace> series;
  for (const fs::path& p : files) series.push_back(read_trace_csv(p.string()));
  const fs::path dest = out.empty() ? results / "plots" : fs::path(out);
  emit_plots(dest.string(), series);
  std::cout << "wrote " << series.size() << " plots to " << dest.string() << '\n';
  return 0;
}

}  // namespace
}  // namespace impc

int main(int argc, char** argv) {
  using namespace impc;
  CLI::App app{"Imperative MPC for quadrotor attitude control"};
  app.require_subcommand(1);

  Overrides o;
  std::string config_path, checkpoints, kind = "both", method, results, out;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "config file (JSON)")->required();
    sub->add_option("--seed", seed, "override the global seed");
    sub->add_option("--output-dir", o.output_dir, "override the output directory");
  };
  CLI::App* train = app.add_subcommand("train", "train every configured method");
  common(train);
  CLI::App* evaluate = app.add_subcommand("evaluate", "run the initial-condition and wind grids");
  common(evaluate);
  CLI::App* sweep = app.add_subcommand("sweep", "survival versus wind speed");
  common(sweep);
  CLI::App* threshold = app.add_subcommand("threshold", "bisect the failure wind speed");
  common(threshold);
  for (CLI::App* sub : {evaluate, sweep, threshold}) {
    sub->add_option("--checkpoints", checkpoints, "directory with trained checkpoints (default: output dir)");
  }
  threshold->add_option("--kind", kind, "impulse, step or both")
      ->check(CLI::IsMember({"impulse", "step", "both"}));
  threshold->add_option("--method", method, "single method (default: evaluation.methods)");
  CLI::App* plot = app.add_subcommand("plot", "render SVG attitude plots from evaluate output");
  plot->add_option("results", results, "evaluate output directory")->required();
  plot->add_option("--out", out, "plot directory (default: <results>/plots)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (plot->parsed()) return cmd_plot(results, out);
    for (CLI::App* sub : {train, evaluate, sweep, threshold}) {
      if (sub->parsed() && sub->count("--seed")) o.seed = seed;
    }
    const Config c = resolve(config_path, o);
    const fs::path ck = checkpoints.empty() ? fs::path(c.output_dir) : fs::path(checkpoints);
    if (train->parsed()) return cmd_train(c);
    if (evaluate->parsed()) return cmd_evaluate(c, ck);
    if (sweep->parsed()) return cmd_sweep(c, ck);
    if (threshold->parsed()) return cmd_threshold(c, ck, kind, method);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
