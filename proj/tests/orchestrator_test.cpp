// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "kernelforge/orchestrator.hpp"
#include "kernelforge/task_io.hpp"
#include "rft_fixtures.hpp"
#include "test_util.hpp"

namespace kftest {
namespace {

using nlohmann::json;

TEST(Config, ParsesKeysAndComments) {
  const auto cfg = parse_config(
      "# run settings\n"
      "seed = 42\n"
      "workers=3   # inline\n"
      "\n"
      "mode = eval\n"
      "eps_higher = 0.3\n"
      "reward_variant = speedup\n"
      "keep_workspaces = true\n"
      "noise_relative_sigma = 0\n");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.synth.seed, 42u);
  EXPECT_EQ(cfg.workers, 3);
  EXPECT_EQ(cfg.mode, EpisodeMode::kEval);
  EXPECT_DOUBLE_EQ(cfg.clip.eps_higher, 0.3);
  EXPECT_EQ(cfg.reward_variant, RewardVariant::kSpeedup);
  EXPECT_TRUE(cfg.keep_workspaces);
  EXPECT_DOUBLE_EQ(cfg.cost.noise_relative_sigma, 0.0);
  EXPECT_EQ(cfg.env_config().max_turns(), 200);
}

TEST(Config, DefaultsFollowTheTrainingSetup) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.budgets.max_turns_train, 150);
  EXPECT_EQ(cfg.budgets.max_turns_eval, 200);
  EXPECT_EQ(cfg.budgets.context_tokens, 131072u);
  EXPECT_DOUBLE_EQ(cfg.clip.eps_lower, 0.2);
  EXPECT_DOUBLE_EQ(cfg.clip.eps_higher, 0.28);
  EXPECT_DOUBLE_EQ(cfg.gae.gamma, 1.0);
  EXPECT_DOUBLE_EQ(cfg.gae.lambda, 0.95);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config("seed = 1\nbogus = 2\n");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_config("seed = -1\n"), DataError);
  EXPECT_THROW(parse_config("gamma = abc\n"), DataError);
  EXPECT_THROW(parse_config("no equals sign\n"), DataError);
  EXPECT_THROW(parse_config("executor = gpu\n"), DataError);
  EXPECT_THROW(parse_config("workers = 0\n"), DataError);
  EXPECT_THROW(parse_config("lambda = 1.5\n"), DataError);
}

TEST(Config, PrintRoundTrips) {
  RunConfig cfg;
  set_config_value(cfg, "lambda", "0.9");
  set_config_value(cfg, "out", "elsewhere");
  const auto text = config_to_text(cfg);
  EXPECT_NE(text.find("lambda = 0.9\n"), std::string::npos);
  const auto again = parse_config(text);
  EXPECT_EQ(config_to_text(again), text);
}

EpisodeLog sample_log(std::string id) {
  EpisodeLog log;
  log.task_id = std::move(id);
  log.level = LevelTag::kL2;
  log.policy_id = "scripted-v1";
  log.seed = 99;
  log.mode = "train";
  log.turns.push_back({0, json{{"type", "stop"}}, "abc", 0, false, false});
  MeasurementReport r;
  r.correct = true;
  r.candidate_ms = 0.5;
  r.eager_ms = 1.0;
  r.compile_ms = 0.8;
  r.per_input_verdicts.fill(true);
  log.measurements = {r};
  log.best_index = 0;
  log.final_reward = 3.0;
  log.done_reason = "policy_stop";
  log.turns_used = 1;
  log.tokens_used = 10;
  return log;
}

TEST(EpisodeLogs, JsonRoundTrip) {
  const auto log = sample_log("t");
  const auto back = episode_from_json(json::parse(canonical_line(log)));
  EXPECT_EQ(canonical_line(back), canonical_line(log));
  EXPECT_DOUBLE_EQ(recompute_reward(back), 3.0);
  const auto res = task_result(back);
  EXPECT_TRUE(res.passed);
  EXPECT_EQ(res.level, LevelTag::kL2);
  EXPECT_DOUBLE_EQ(*res.speedup_vs_compile, 1.6);
}

TEST(EpisodeLogs, EnvErrorRecomputesToMinusOne) {
  auto log = sample_log("t");
  log.done_reason = "env_error";
  EXPECT_DOUBLE_EQ(recompute_reward(log), -1.0);
}

TEST(EpisodeStore, AppendScanAndFilter) {
  TempDir dir("store");
  EpisodeStore store(dir.path() / "sub" / "episodes.jsonl");
  store.append(sample_log("a"));
  store.append_all({sample_log("b"), sample_log("c")});
  EXPECT_EQ(store.scan().size(), 3u);
  const auto only_b = store.scan([](const EpisodeLog& l) { return l.task_id == "b"; });
  ASSERT_EQ(only_b.size(), 1u);
  EXPECT_EQ(only_b[0].task_id, "b");
}

TEST(EpisodeStore, TruncatedTailIsIgnoredWithWarning) {
  TempDir dir("store");
  const auto path = dir.path() / "episodes.jsonl";
  EpisodeStore store(path);
  store.append(sample_log("a"));
  const auto line = canonical_line(sample_log("b"));
  std::ofstream(path, std::ios::app) << line.substr(0, line.size() / 2);
  std::vector<std::string> warnings;
  const auto logs = store.scan({}, &warnings);
  EXPECT_EQ(logs.size(), 1u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("incomplete"), std::string::npos);
}

TEST(EpisodeStore, CorruptLineNamesOffset) {
  TempDir dir("store");
  const auto path = dir.path() / "episodes.jsonl";
  EpisodeStore store(path);
  store.append(sample_log("a"));
  const auto offset = std::filesystem::file_size(path);
  std::ofstream(path, std::ios::app) << "{not json}\n";
  try {
    store.scan();
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset " + std::to_string(offset)),
              std::string::npos)
        << e.what();
  }
}

TEST(Run, DeterministicAcrossWorkerCounts) {
  TempDir dir("run");
  const auto tasks =
      load_task_dir(std::filesystem::path(KF_SOURCE_DIR) / "tests/fixtures/run_tasks");
  ASSERT_GE(tasks.size(), 4u);
  RunConfig cfg;
  cfg.seed = 5;
  auto policies = [] { return std::make_unique<ScriptedPolicy>(); };
  const auto one = run_episodes(tasks, policies, make_executor_factory(cfg), cfg, dir.path() / "w1");
  cfg.workers = 4;
  const auto four = run_episodes(tasks, policies, make_executor_factory(cfg), cfg, dir.path() / "w4");
  ASSERT_EQ(one.size(), four.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(canonical_line(one[i]), canonical_line(four[i]));
    EXPECT_DOUBLE_EQ(recompute_reward(one[i]), one[i].final_reward);
  }
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "w1" / tasks[0].task_id));
}

TEST(Run, SeedChangesMeasurements) {
  TempDir dir("run");
  const auto task = diag_matmul_task("seeded", 32, 32);
  RunConfig a, b;
  b.seed = 1;
  ScriptedPolicy p1, p2;
  const auto la = run_episode(task, p1, make_executor_factory(a), a, dir.path());
  const auto lb = run_episode(task, p2, make_executor_factory(b), b, dir.path());
  EXPECT_NE(la.seed, lb.seed);
  ASSERT_FALSE(la.measurements.empty());
  EXPECT_NE(la.measurements[0].eager_ms, lb.measurements[0].eager_ms);
}

TEST(Run, UnreachableExternalExecutorIsEnvError) {
  TempDir dir("run");
  RunConfig cfg;
  cfg.executor = "external";
  cfg.executor_endpoint = "127.0.0.1:1";
  ScriptedPolicy p;
  const auto log = run_episode(diag_matmul_task(), p, make_executor_factory(cfg), cfg, dir.path());
  EXPECT_EQ(log.done_reason, "env_error");
  EXPECT_DOUBLE_EQ(log.final_reward, -1.0);
}

TEST(Rft, FourEpisodeSetKeepsOnlyTheCleanOne) {
  TempDir dir("rft");
  const auto set = rft_episode_set(dir.path());
  ASSERT_EQ(set.size(), 4u);
  EXPECT_DOUBLE_EQ(set[0].log.final_reward, -1.0);
  EXPECT_DOUBLE_EQ(set[1].log.final_reward, 3.0);
  EXPECT_DOUBLE_EQ(set[2].log.final_reward, 2.0);
  EXPECT_GT(set[3].log.final_reward, 0.0);
  const std::vector<std::vector<std::string>> reasons = {
      {"nonpositive_reward"}, {}, {"redundant_loop"}, {"schema_violation"}};
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto v = rft_filter_log(set[i].log);
    EXPECT_EQ(v.kept, set[i].expect_kept) << set[i].name;
    EXPECT_EQ(v.reasons, reasons[i]) << set[i].name;
  }
}

}  // namespace
}  // namespace kftest
