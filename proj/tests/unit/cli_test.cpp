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


// Drives the impc binary end to end on a tiny configuration.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "impc/config.hpp"

namespace impc {
namespace {

namespace fs = std::filesystem;

struct Invocation {
  int code = -1;
  std::string output;
};

constexpr const char* kFast = R"({
  "training": {"steps": 0, "methods": ["impc"]},
  "evaluation": {"trials": 1, "initial_attitudes_deg": [10], "wind_speeds": [10], "methods": ["impc"]},
  "threshold": {"cap": 1},
  "sweep": {"max_speed": 4, "speed_step": 2}
})";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("impc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write("fast.json", kFast);
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write(const std::string& name, const std::string& text) { std::ofstream(dir_ / name) << text; }

  Invocation run(const std::string& args, const std::string& env = "") {
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" IMPC_CLI "' " + args + " 2>&1";
    Invocation r;
    FILE* p = popen(cmd.c_str(), "r");
    char buf[4096];
    while (std::fgets(buf, sizeof buf, p)) r.output += buf;
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  std::string read(const fs::path& p) {
    std::ifstream f(dir_ / p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

TEST_F(Cli, MissingConfigExitsTwo) {
  const Invocation r = run("train missing.json");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("missing.json"), std::string::npos) << r.output;
}

TEST_F(Cli, UnknownKeyNamesTheField) {
  write("bad.json", R"({"vehicle": {"mas": 1.0}})");
  const Invocation r = run("train bad.json");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("vehicle.mas"), std::string::npos) << r.output;
}

TEST_F(Cli, BadArgumentsExitTwo) {
  EXPECT_EQ(run("threshold fast.json --kind sideways").code, 2);
  EXPECT_EQ(run("evaluate fast.json --checkpoints nowhere").code, 2);
}

TEST_F(Cli, TrainWritesCheckpointAndEffectiveConfig) {
  const Invocation r = run("train fast.json --output-dir out --seed 9");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir_ / "out/impc/checkpoint-impc.json"));
  EXPECT_TRUE(fs::exists(dir_ / "out/train-summary.csv"));
  const Config echoed = parse_config(read("out/effective-config"));
  EXPECT_EQ(echoed.seed, 9u);
  EXPECT_EQ(echoed.output_dir, "out");
  EXPECT_EQ(echoed.training.steps, 0);
}

TEST_F(Cli, OutputDirFromEnvironment) {
  ASSERT_EQ(run("train fast.json", "IMPC_OUTPUT_DIR=envout").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "envout/impc/checkpoint-impc.json"));
  ASSERT_EQ(run("train fast.json --output-dir flag", "IMPC_OUTPUT_DIR=envout2").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "flag/effective-config"));
  EXPECT_FALSE(fs::exists(dir_ / "envout2"));
}

TEST_F(Cli, EvaluateThresholdSweepAndPlot) {
  ASSERT_EQ(run("train fast.json --output-dir out").code, 0);
  const Invocation eval = run("evaluate fast.json --output-dir out");
  ASSERT_EQ(eval.code, 0) << eval.output;
  for (const char* f : {"initial_conditions.csv", "initial_conditions.json", "wind.csv", "wind.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  }
  EXPECT_EQ(read("out/initial_conditions.csv").rfind("method,condition,trials,failures,", 0), 0u);

  const Invocation th = run("threshold fast.json --output-dir out --kind step");
  ASSERT_EQ(th.code, 0) << th.output;
  EXPECT_NE(th.output.find("no failure <= cap (1 m/s)"), std::string::npos) << th.output;
  EXPECT_TRUE(fs::exists(dir_ / "out/thresholds.csv"));

  ASSERT_EQ(run("sweep fast.json --output-dir out").code, 0);
  EXPECT_EQ(read("out/sweep.csv").rfind("method,kind,speed,survived\n", 0), 0u);

  const Invocation plot = run("plot out");
  ASSERT_EQ(plot.code, 0) << plot.output;
  int svgs = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "out/plots")) svgs += e.path().extension() == ".svg";
  EXPECT_EQ(svgs, 3);
}

TEST_F(Cli, PlotWithoutTracesFails) {
  fs::create_directories(dir_ / "empty");
  EXPECT_NE(run("plot empty").code, 0);
}

}  // namespace
}  // namespace impc
