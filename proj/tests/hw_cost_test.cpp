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

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

#include "distplan/hw_cost.hpp"
#include "oracles.hpp"

namespace distplan {
namespace {

HardwareProfile with(HardwareProfile p, double mfu) {
  p.mfu = mfu;
  return p;
}

TEST(Profiles, PeakFlopsPerGeneration) {
  EXPECT_EQ(profile_by_name("v4").peak_flops_per_core, 275e12);
  EXPECT_EQ(profile_by_name("v3").peak_flops_per_core, 122e12);
  EXPECT_EQ(profile_by_name("v4").cores_per_slice, 32);
  EXPECT_EQ(profile_by_name("v4-512").cores_per_slice, 512);
  EXPECT_THROW(profile_by_name("v5-8"), ValidationError);
  EXPECT_THROW(profile_by_name("v4-"), ValidationError);
  EXPECT_THROW(profile_by_name("v4-x"), ValidationError);
}

TEST(Profiles, DataFileMatchesBuiltins) {
  const std::string path = std::string(DISTPLAN_SOURCE_DIR) + "/data/profiles.json";
  EXPECT_EQ(load_profile_file(path, "v4"), profile_by_name("v4"));
  EXPECT_EQ(load_profile_file(path, "v3"), profile_by_name("v3"));
  EXPECT_THROW(load_profile_file(path, "v9"), ValidationError);
}

TEST(Profiles, JsonOverridesAreStrict) {
  const auto base = profile_by_name("v4-8");
  const auto p = apply_profile_json(base, Json{{"link_bandwidth", 1e9}, {"mfu", 1.0}});
  EXPECT_EQ(p.link_bandwidth, 1e9);
  EXPECT_EQ(p.mfu, 1.0);
  EXPECT_EQ(p.cores_per_slice, 8);
  EXPECT_THROW(apply_profile_json(base, Json{{"bandwith", 1e9}}), ValidationError);
  EXPECT_THROW(apply_profile_json(base, Json{{"mfu", 1.5}}), ValidationError);
  EXPECT_THROW(apply_profile_json(base, Json{{"link_bandwidth", 0}}), ValidationError);
  EXPECT_EQ(profile_from_json(to_json(p)), p);
  EXPECT_THROW(profile_from_json(Json{{"name", "x"}}), ValidationError);
}

TEST(MatmulTime, Examples) {
  EXPECT_EQ(matmul_time(0, profile_by_name("v4")), 0.0);
  EXPECT_DOUBLE_EQ(matmul_time(275e12, with(profile_by_name("v4"), 1.0)), 1.0);
  EXPECT_DOUBLE_EQ(matmul_time(122e12, with(profile_by_name("v3"), 0.5)), 2.0);
  EXPECT_THROW(matmul_time(-1, profile_by_name("v4")), ValidationError);
}

TEST(AllReduceTime, Examples) {
  auto p = profile_by_name("v4");
  EXPECT_EQ(allreduce_time(1e9, 1, p), 0.0);
  p.link_bandwidth = 1e11;
  p.link_latency = 0;
  EXPECT_DOUBLE_EQ(allreduce_time(1e9, 2, p), 0.01);
  EXPECT_THROW(allreduce_time(1e9, 0, p), ValidationError);
}

TEST(AllReduceTime, ApproachesTwiceBytesOverBandwidthFromBelow) {
  auto p = profile_by_name("v4");
  p.link_latency = 0;
  const double limit = 2 * 1e9 / p.link_bandwidth;
  double prev = 0;
  for (std::int64_t n = 2; n <= 1024; n *= 2) {
    const double t = allreduce_time(1e9, n, p);
    EXPECT_GT(t, prev);
    EXPECT_LT(t, limit);
    prev = t;
  }
  EXPECT_NEAR(prev, limit, limit * 1e-3);
}

TEST(CollectiveTime, MatchesRingOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> bytes(1, 1e9), bw(1e8, 1e12), lat(0, 1e-5);
  const std::pair<CollectiveKind, const char*> kinds[] = {
      {CollectiveKind::kAllReduce, "all_reduce"},
      {CollectiveKind::kAllGather, "all_gather"},
      {CollectiveKind::kReduceScatter, "reduce_scatter"},
      {CollectiveKind::kAllToAll, "all_to_all"}};
  for (int i = 0; i < 200; ++i) {
    auto p = profile_by_name("v4");
    p.link_bandwidth = bw(rng);
    p.link_latency = lat(rng);
    const double b = bytes(rng);
    const std::int64_t n = 1 + i % 64;
    for (const auto& [kind, name] : kinds) {
      const double expect = oracle::ring_time(name, b, double(n), p.link_bandwidth, p.link_latency);
      EXPECT_NEAR(collective_time(kind, b, n, p), expect, 1e-12 * std::max(1.0, expect));
    }
  }
}

TEST(CostModel, MonotoneInWork) {
  const auto p = profile_by_name("v4");
  double prev_mm = -1, prev_ar = -1;
  for (double x = 0; x < 1e12; x = x * 3 + 1) {
    EXPECT_GE(matmul_time(x, p), prev_mm);
    EXPECT_GE(allreduce_time(x, 8, p), prev_ar);
    prev_mm = matmul_time(x, p);
    prev_ar = allreduce_time(x, 8, p);
  }
}

TEST(Compose, SumOrMax) {
  EXPECT_EQ(compose(2, 3, false), 5);
  EXPECT_EQ(compose(2, 3, true), 3);
}

TEST(CommFraction, Examples) {
  const double r = 275.0 / 122.0;
  EXPECT_NEAR(infer_comm_fraction(r, r), 0.0, 1e-12);
  EXPECT_NEAR(infer_comm_fraction(2.0, r), 0.100, 0.005);
  EXPECT_NEAR(infer_comm_fraction(1.6, r), 0.325, 0.005);
  EXPECT_NEAR(infer_comm_fraction(2.0, r), oracle::solve_comm_fraction(2.0, r), 1e-12);
  EXPECT_NEAR(infer_comm_fraction(1.6, r), oracle::solve_comm_fraction(1.6, r), 1e-12);
  EXPECT_NEAR(infer_comm_fraction(1.0, r), 1.0, 1e-12);
  EXPECT_THROW(infer_comm_fraction(2.5, r), ValidationError);
  EXPECT_THROW(infer_comm_fraction(0.9, r), ValidationError);
  EXPECT_THROW(infer_comm_fraction(1.1, 1.0), ValidationError);
}

TEST(CommFraction, InvertsSpeedupModel) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ratio(1.01, 10);
  for (int i = 0; i < 500; ++i) {
    const double r = ratio(rng);
    const double s = std::uniform_real_distribution<double>(1.0, r)(rng);
    const double c = infer_comm_fraction(s, r);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
    EXPECT_NEAR(predicted_speedup(c, r), s, 1e-12 * s);
  }
}

TEST(CommFraction, SpeedupNeverExceedsFlopsRatio) {
  for (double r : {1.5, 275.0 / 122.0, 8.0}) {
    for (double c = 0; c <= 1.0; c += 0.01) EXPECT_LE(predicted_speedup(c, r), r * (1 + 1e-15));
  }
}

TEST(PhaseSpeedups, CombineByOldTimeShare) {
  EXPECT_DOUBLE_EQ(combine_phase_speedups({{1, 2.0}, {2, 1.6}}), 3.0 / (0.5 + 1.25));
  EXPECT_DOUBLE_EQ(combine_phase_speedups({{1, 3.0}}), 3.0);
  EXPECT_THROW(combine_phase_speedups({{1, 0.0}}), ValidationError);
}

}  // namespace
}  // namespace distplan
