/* Copyright 2026 The distplan Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

struct Output {
  int status = -1;
  std::string out;
};

Output run_cli(const std::string& args) {
  const std::string cmd = std::string(DISTPLAN_CLI) + " " + args + " 2>/dev/null";
  Output o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

std::string config(const std::string& name) {
  return std::string(DISTPLAN_SOURCE_DIR) + "/configs/" + name;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("distplan_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write(const fs::path& dir, const std::string& name, const std::string& text) {
  std::ofstream(dir / name) << text;
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Cli, AnalyzeReportsParamsAndEchoesConfig) {
  const auto o = run_cli("analyze --config " + config("tensor.json"));
  ASSERT_EQ(o.status, 0);
  const Json j = Json::parse(o.out);
  EXPECT_EQ(j["tool_version"], "0.1.0");
  EXPECT_TRUE(j["config_echo"].contains("config"));
  EXPECT_TRUE(j["config_echo"].contains("defaults_applied"));
  EXPECT_GT(j["result"]["params"]["total"].get<std::int64_t>(), 0);
}

TEST(Cli, AnalyzeWithoutLayers) {
  const auto dir = scratch("nolayers");
  const auto cfg = write(dir, "c.json",
                         R"({"model": {"hidden": 64, "layers": 0, "heads": 4, "vocab": 100}})");
  const auto o = run_cli("analyze --config " + cfg.string());
  ASSERT_EQ(o.status, 0);
  const Json j = Json::parse(o.out);
  EXPECT_EQ(j["result"]["params"]["total"].get<std::int64_t>(), 2 * 64 * 100);
  EXPECT_EQ(j["result"]["params"]["blocks"].get<std::int64_t>(), 0);
}

TEST(Cli, Deterministic) {
  for (const char* sub : {"simulate", "shard", "compare"}) {
    const std::string name = sub;
    const auto cfg = config(name == "compare" ? "combined.json"
                            : name == "shard" ? "tensor.json"
                                              : "pipeline.json");
    const auto a = run_cli(std::string(sub) + " --config " + cfg);
    const auto b = run_cli(std::string(sub) + " --config " + cfg + " --seed 17");
    ASSERT_EQ(a.status, 0) << sub;
    ASSERT_EQ(b.status, 0) << sub;
    Json ja = Json::parse(a.out), jb = Json::parse(b.out);
    ja["config_echo"].erase("seed");
    jb["config_echo"].erase("seed");
    EXPECT_EQ(ja, jb) << sub;
  }
}

TEST(Cli, PipelineSvgHasOneRowPerStage) {
  const auto o = run_cli("simulate --config " + config("pipeline.json") + " --format svg");
  ASSERT_EQ(o.status, 0);
  EXPECT_NE(o.out.find("<svg"), std::string::npos);
  for (const char* row : {">D_0<", ">D_1<", ">D_2<"}) EXPECT_NE(o.out.find(row), std::string::npos) << row;
  EXPECT_EQ(o.out.find(">D_3<"), std::string::npos);
  EXPECT_NE(o.out.find("F_{0}"), std::string::npos);
  EXPECT_NE(o.out.find("B_{2}"), std::string::npos);
  EXPECT_NE(o.out.find("class=\"idle\""), std::string::npos);
}

TEST(Cli, OutDirectoryGetsReportFiles) {
  const auto dir = scratch("out");
  const auto o = run_cli("simulate --config " + config("pipeline.json") + " --out " + dir.string());
  ASSERT_EQ(o.status, 0);
  ASSERT_TRUE(fs::exists(dir / "simulate.json"));
  // The config asks for svg alongside json.
  EXPECT_TRUE(fs::exists(dir / "simulate.svg"));
  const Json j = Json::parse(slurp(dir / "simulate.json"));
  EXPECT_GT(j["result"]["step_time"].get<double>(), 0);
}

TEST(Cli, CapacityPrintsThreeRows) {
  const auto o = run_cli("capacity --config " + config("capacity.json"));
  ASSERT_EQ(o.status, 0);
  const Json j = Json::parse(o.out);
  ASSERT_EQ(j["result"]["rows"].size(), 3u);
  for (const auto& row : j["result"]["rows"]) {
    EXPECT_TRUE(row.contains("residual"));
    EXPECT_GT(row["max_params"].get<std::int64_t>(), 0);
  }
  const auto text = run_cli("capacity --config " + config("capacity.json") + " --format text");
  ASSERT_EQ(text.status, 0);
  for (const char* slice : {"v4-16", "v4-128", "v4-512"}) {
    EXPECT_NE(text.out.find(slice), std::string::npos) << slice;
  }
}

TEST(Cli, EverySampleConfigRuns) {
  const std::pair<const char*, const char*> runs[] = {
      {"simulate", "pipeline.json"}, {"simulate", "tensor.json"}, {"simulate", "combined.json"},
      {"shard", "tensor.json"},      {"compare", "compare.json"}, {"checkpoint", "checkpoint.json"}};
  for (const auto& [sub, cfg] : runs) {
    const auto o = run_cli(std::string(sub) + " --config " + config(cfg));
    EXPECT_EQ(o.status, 0) << sub << " " << cfg;
    EXPECT_NO_THROW(Json::parse(o.out)) << sub << " " << cfg;
  }
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("errors");
  EXPECT_EQ(run_cli("").status, 2);
  EXPECT_EQ(run_cli("analyze").status, 2);
  EXPECT_EQ(run_cli("analyze --config /nonexistent.json").status, 2);
  EXPECT_EQ(run_cli("frobnicate --config " + config("tensor.json")).status, 2);
  const auto bad = write(dir, "bad.json", R"({"modle": {}})");
  EXPECT_EQ(run_cli("analyze --config " + bad.string()).status, 2);
  const auto heads = write(dir, "heads.json",
                           R"({"model": {"hidden": 96, "layers": 1, "heads": 3, "vocab": 64,
                                         "seq_len": 8, "batch": 2},
                               "profile": "v4-2", "tp": 2})");
  EXPECT_EQ(run_cli("shard --config " + heads.string()).status, 2);
  const auto huge = write(dir, "huge.json",
                          R"({"model": {"hidden": 64, "layers": 1, "heads": 4},
                              "capacity": {"rows": [{"slice": "v4-8", "hidden": 8192}], "calibration": null},
                              "profile_overrides": {"hbm_bytes_per_core": 1e6}})");
  EXPECT_EQ(run_cli("capacity --config " + huge.string()).status, 3);
  EXPECT_EQ(run_cli("checkpoint --config " + config("tensor.json")).status, 2);
  EXPECT_EQ(run_cli("analyze --config " + config("tensor.json") + " --format svg").status, 2);
}

}  // namespace
