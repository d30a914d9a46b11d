// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "kernelforge/metrics.hpp"
#include "kernelforge/reward.hpp"
#include "kernelforge/task_io.hpp"
#include "reward_oracle.hpp"
#include "test_util.hpp"

namespace kftest {
namespace {

MeasurementReport timed(double t, double te, double tc) {
  MeasurementReport r;
  r.correct = true;
  r.candidate_ms = t;
  r.eager_ms = te;
  r.compile_ms = tc;
  r.per_input_verdicts.fill(true);
  return r;
}

MeasurementReport failed() {
  MeasurementReport r;
  r.eager_ms = 1.0;
  r.compile_ms = 1.0;
  r.failure_reason = "output mismatch on input 0";
  return r;
}

TEST(Reward, TruthTableAgainstIntegerOracle) {
  const auto r = reward_truth_table();
  EXPECT_EQ(r.points, 10000);
  EXPECT_EQ(r.mismatches, 0);
  EXPECT_EQ(r.boundary_points, 2 * (100 + 50 - 1));
}

TEST(Reward, StrictBoundary) {
  EXPECT_FALSE(significant_speedup(95.0, 100.0));
  EXPECT_TRUE(significant_speedup(94.999, 100.0));
  EXPECT_FALSE(significant_speedup(19.0, 20.0));
  EXPECT_EQ(schedule_reward({true, 95.0, 100.0, 100.0}), 1);
  EXPECT_EQ(schedule_reward({true, 94.0, 100.0, 95.0}), 2);
  EXPECT_EQ(schedule_reward({true, 1.0, 100.0, 100.0}), 3);
  EXPECT_EQ(schedule_reward({false, 1.0, 100.0, 100.0}), -1);
  // Beating compile alone does not earn the eager tier.
  EXPECT_EQ(schedule_reward({true, 90.0, 50.0, 100.0}), 1);
}

TEST(Reward, RejectsNonPositiveTimes) {
  EXPECT_THROW(significant_speedup(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(significant_speedup(1.0, -1.0), std::invalid_argument);
  EXPECT_THROW(significant_speedup(1.0, std::numeric_limits<double>::infinity()),
               std::invalid_argument);
  EXPECT_THROW(schedule_reward({true, 0.0, 1.0, 1.0}), std::invalid_argument);
  EXPECT_EQ(schedule_reward({false, 0.0, 0.0, 0.0}), -1);
}

TEST(Reward, SpeedupVariant) {
  EXPECT_DOUBLE_EQ(speedup_reward({true, 2.0, 10.0, 5.0}), 2.5);
  EXPECT_DOUBLE_EQ(speedup_reward({false, 2.0, 10.0, 5.0}), -1.0);
  EXPECT_EQ(parse_reward_variant("speedup"), RewardVariant::kSpeedup);
  EXPECT_EQ(parse_reward_variant("robust"), RewardVariant::kRobust);
  EXPECT_FALSE(parse_reward_variant("fast"));
}

TEST(Reward, UntimedReportCountsAsIncorrect) {
  auto r = timed(1.0, 2.0, 2.0);
  r.candidate_ms.reset();
  EXPECT_FALSE(reward_input(r).correct);
  EXPECT_DOUBLE_EQ(trajectory_reward(RewardVariant::kRobust, r), -1.0);
}

TEST(BestOfTrajectory, LargestCompileRatioEarliestTie) {
  EXPECT_FALSE(best_of_trajectory({}));
  EXPECT_FALSE(best_of_trajectory({failed(), failed()}));
  const std::vector<MeasurementReport> rs = {failed(), timed(5, 10, 10), timed(2, 10, 10),
                                             timed(4, 20, 8), failed()};
  EXPECT_EQ(best_of_trajectory(rs), 2u);
  const std::vector<MeasurementReport> ties = {timed(2, 10, 10), timed(1, 10, 5)};
  EXPECT_EQ(best_of_trajectory(ties), 0u);
  // A later failure does not erase an earlier success.
  EXPECT_DOUBLE_EQ(trajectory_reward(RewardVariant::kRobust, rs[*best_of_trajectory(rs)]), 3.0);
}

TaskResult result(std::string id, LevelTag level, bool passed, double se = 1.0, double sc = 1.0) {
  TaskResult r{std::move(id), level, passed, std::nullopt, std::nullopt};
  if (passed) {
    r.speedup_vs_eager = se;
    r.speedup_vs_compile = sc;
  }
  return r;
}

TEST(Metrics, Geomean) {
  EXPECT_FALSE(geomean({}));
  EXPECT_NEAR(*geomean({2.0, 8.0}), 4.0, 1e-12);
  EXPECT_THROW(geomean({1.0, 0.0}), std::invalid_argument);
}

TEST(Metrics, LevelReportCountsOverAllTasks) {
  const std::vector<TaskResult> rs = {result("a", LevelTag::kL1, true, 2.0, 0.5),
                                      result("b", LevelTag::kL1, true, 1.0, 4.0),
                                      result("c", LevelTag::kL1, false),
                                      result("d", LevelTag::kL1, false)};
  const auto r = level_report(rs, "L1");
  EXPECT_EQ(r.n_tasks, 4);
  EXPECT_DOUBLE_EQ(r.pass_rate, 50.0);
  EXPECT_DOUBLE_EQ(r.faster_rate_eager, 25.0);  // speedup exactly 1 is not faster
  EXPECT_DOUBLE_EQ(r.faster_rate_compile, 25.0);
  EXPECT_NEAR(*r.geomean_eager, std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(*r.geomean_compile, std::sqrt(2.0), 1e-12);
  EXPECT_FALSE(level_report({result("x", LevelTag::kL2, false)}, "L2").geomean_eager);
}

TEST(Metrics, WeightedOverall) {
  std::map<LevelTag, LevelReport> levels;
  levels[LevelTag::kL1] = {"L1", 10, 100.0, 100.0, 100.0, 2.0, 2.0};
  levels[LevelTag::kL3] = {"L3", 10, 50.0, 40.0, 20.0, 8.0, std::nullopt};
  const auto o = aggregate_overall(levels, {{LevelTag::kL1, 100.0}, {LevelTag::kL3, 50.0}});
  EXPECT_NEAR(o.pass_rate, (100 * 100.0 + 50 * 50.0) / 150.0, 1e-12);
  EXPECT_NEAR(*o.geomean_eager, std::exp((100 * std::log(2.0) + 50 * std::log(8.0)) / 150), 1e-12);
  EXPECT_NEAR(*o.geomean_compile, 2.0, 1e-12);
  EXPECT_EQ(o.n_tasks, 20);
  EXPECT_THROW(aggregate_overall(levels, {{LevelTag::kL1, 0.0}}), std::invalid_argument);
}

TEST(Metrics, RoundHalfUp) {
  EXPECT_DOUBLE_EQ(round_half_up(96.85, 1), 96.9);
  EXPECT_DOUBLE_EQ(round_half_up(96.84, 1), 96.8);
  EXPECT_DOUBLE_EQ(round_half_up(2.605, 2), 2.61);
  EXPECT_DOUBLE_EQ(round_half_up(98.8, 1), 98.8);
  EXPECT_DOUBLE_EQ(round_half_up(0.0, 1), 0.0);
}

TEST(Metrics, HeadlineFixture) {
  const auto rs = load_results(std::string(KF_SOURCE_DIR) + "/tests/fixtures/headline_results.jsonl");
  ASSERT_EQ(rs.size(), 250u);
  const auto j = eval_report_to_json(evaluate_results(rs));
  ASSERT_EQ(j["rows"].size(), 4u);
  const auto& l3 = j["rows"][2];
  EXPECT_EQ(l3["level"], "L3");
  EXPECT_DOUBLE_EQ(l3["pass_rate"].get<double>(), 94.0);
  EXPECT_DOUBLE_EQ(l3["faster_rate_compile"].get<double>(), 90.0);
  const auto& o = j["rows"][3];
  EXPECT_EQ(o["level"], "Overall");
  EXPECT_DOUBLE_EQ(o["pass_rate"].get<double>(), 98.8);
  EXPECT_DOUBLE_EQ(o["faster_rate_eager"].get<double>(), 98.4);
  EXPECT_DOUBLE_EQ(o["faster_rate_compile"].get<double>(), 96.8);
  EXPECT_DOUBLE_EQ(o["geomean_eager"].get<double>(), 2.60);
  EXPECT_DOUBLE_EQ(o["geomean_compile"].get<double>(), 2.11);
  const auto text = render_report(evaluate_results(rs));
  EXPECT_NE(text.find("98.8%"), std::string::npos);
  EXPECT_NE(text.find("96.8%"), std::string::npos);
}

TEST(Metrics, EmptyReport) {
  const auto rep = evaluate_results({});
  EXPECT_TRUE(rep.rows.empty());
  EXPECT_NE(render_report(rep).find("(no results)"), std::string::npos);
  EXPECT_TRUE(eval_report_to_json(rep)["empty"].get<bool>());
}

TEST(Metrics, ResultSchema) {
  const auto r = result("t", LevelTag::kL2, true, 1.5, 0.75);
  EXPECT_EQ(result_from_json(result_to_json(r)), r);
  auto j = result_to_json(r);
  j["speedup_vs_eager"] = nullptr;
  EXPECT_THROW(result_from_json(j), DataError);
  j = result_to_json(result("u", LevelTag::kL1, false));
  j["speedup_vs_compile"] = 2.0;
  EXPECT_THROW(result_from_json(j), DataError);
  TempDir dir("results");
  save_results(dir.path() / "r.jsonl", {r, r});
  EXPECT_EQ(load_results(dir.path() / "r.jsonl").size(), 2u);
}

}  // namespace
}  // namespace kftest
