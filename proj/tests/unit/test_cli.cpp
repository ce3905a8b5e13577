/*
 * Copyright (c) 2026, The a3s authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("a3s_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(sh("gen --n 300 --k 6 --dims 8 --box 2 --noise 0.05 --seed 3 --out " + q(dir_ / "data")), 0);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

  /// Runs the CLI with `args`; returns its exit code.
  int sh(const std::string& args, const std::string& env = "") const {
    const std::string cmd = env + " '" A3S_CLI_PATH "' " + args + " > " + q(dir_ / "stdout.txt") + " 2> " +
                            q(dir_ / "stderr.txt");
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string run_args(const std::string& out, const std::string& extra = "") const {
    return "run --data " + q(dir_ / "data/features.npy") + " --labels " + q(dir_ / "data/labels.txt") +
           " --budget 120 --seed 2 --out " + q(dir_ / out) + " " + extra;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenWritesDataset) {
  EXPECT_TRUE(fs::exists(dir_ / "data/features.npy"));
  std::ifstream in(dir_ / "data/labels.txt");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 300u);
}

TEST_F(Cli, RunWritesAllOutputs) {
  ASSERT_EQ(sh(run_args("out", "--refine-budget 20")), 0) << slurp(dir_ / "stderr.txt");
  for (const char* f : {"assignment.txt", "runlog.jsonl", "metrics.csv", "constraints.log", "summary.json"})
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  const auto summary = nlohmann::json::parse(slurp(dir_ / "out/summary.json"));
  EXPECT_LE(summary["queries_used"].get<std::size_t>(), 140u);
  EXPECT_EQ(summary["seed"], 2);
  EXPECT_GT(summary["final"]["nmi"].get<double>(), summary["initial"]["nmi"].get<double>());
  std::istringstream log(slurp(dir_ / "out/runlog.jsonl"));
  std::size_t n = 0;
  for (std::string l; std::getline(log, l); ++n) EXPECT_TRUE(nlohmann::json::accept(l));
  EXPECT_GT(n, 0u);
  const auto csv = slurp(dir_ / "out/metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "queries_used,k,nmi,ari,purity,upsilon,r");
}

TEST_F(Cli, DeterministicOutputs) {
  ASSERT_EQ(sh(run_args("a")), 0);
  ASSERT_EQ(sh(run_args("b")), 0);
  EXPECT_EQ(slurp(dir_ / "a/runlog.jsonl"), slurp(dir_ / "b/runlog.jsonl"));
  EXPECT_EQ(slurp(dir_ / "a/assignment.txt"), slurp(dir_ / "b/assignment.txt"));
}

TEST_F(Cli, SeedEnvironmentOverride) {
  ASSERT_EQ(sh(run_args("env"), "A3S_SEED=11"), 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "env/summary.json"))["seed"], 11);
  EXPECT_EQ(sh(run_args("bad"), "A3S_SEED=eleven"), 2);
}

TEST_F(Cli, ResumeAfterTruncatedLog) {
  ASSERT_EQ(sh(run_args("full")), 0);
  ASSERT_EQ(sh(run_args("part")), 0);
  // Keep the first third of the log, cutting the last line mid-way.
  const auto log = slurp(dir_ / "part/constraints.log");
  std::ofstream(dir_ / "part/constraints.log", std::ios::trunc) << log.substr(0, log.size() / 3);
  fs::remove(dir_ / "part/assignment.txt");
  ASSERT_EQ(sh(run_args("part", "--resume")), 0) << slurp(dir_ / "stderr.txt");
  EXPECT_EQ(slurp(dir_ / "part/assignment.txt"), slurp(dir_ / "full/assignment.txt"));
  EXPECT_EQ(slurp(dir_ / "part/runlog.jsonl"), slurp(dir_ / "full/runlog.jsonl"));
  const auto summary = nlohmann::json::parse(slurp(dir_ / "part/summary.json"));
  EXPECT_GT(summary["replayed_answers"].get<std::size_t>(), 0u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(sh("run --data " + q(dir_ / "missing.npy") + " --labels none --out " + q(dir_ / "x")), 4);
  EXPECT_EQ(sh(run_args("t", "--tau 3")), 2);
  EXPECT_EQ(sh(run_args("t", "--tau high")), 2);
  EXPECT_EQ(sh(run_args("t", "--init dbscan")), 2);
  EXPECT_EQ(sh(run_args("t", "--oracle psychic")), 2);
  EXPECT_EQ(sh("run --data " + q(dir_ / "data/features.npy") + " --labels none --out " + q(dir_ / "x")), 2);
  EXPECT_EQ(sh("frobnicate"), 2);
  EXPECT_EQ(sh("--help"), 0);
}
