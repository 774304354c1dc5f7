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

// Run configuration: one JSON key tree covering the vehicle, sensors, wind,
// controller, network, training budget and experiment grids.

#include <cstdint>
#include <string>
#include <vector>

#include "impc/harness.hpp"

namespace impc {

struct EvaluationConfig {
  int trials = 10;
  double episode_seconds = 2.0;
  std::vector<double> initial_attitudes_deg{10.0, 15.0, 20.0};
  std::vector<double> wind_speeds{10.0, 15.0, 20.0};
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
};

struct SweepConfig {
  double max_speed = 60.0;  // m/s
  double speed_step = 2.0;
};

struct Config {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  int threads = 0;  // 0 = hardware concurrency
  Environment env;
  WindEvent wind;  // kind and speed are set per scenario
  TrainConfig training;
  std::vector<Method> train_methods{kAllMethods.begin(), kAllMethods.end()};
  EvaluationConfig evaluation;
  ThresholdConfig threshold;
  SweepConfig sweep;

  // Seeds derived from `seed` for each stage; evaluation seeds never
  // coincide with the training or validation streams.
  TrainConfig training_for(Method m) const;
  std::uint64_t evaluation_seed() const;
  ThresholdConfig threshold_config() const;
};

// Throws ConfigError with the dotted path of the offending field. Keys not
// listed in the schema are rejected.
Config parse_config(const std::string& json_text);
Config load_config(const std::string& path);
// Fully defaulted config, pretty-printed.
std::string to_json_text(const Config& c);

}  // namespace impc
