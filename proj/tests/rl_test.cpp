// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "gae_oracle.hpp"
#include "kernelforge/rl.hpp"
#include "kernelforge/task_io.hpp"
#include "test_util.hpp"

namespace kftest {
namespace {

using nlohmann::json;

Seq<double> seq(std::initializer_list<double> xs) {
  Seq<double> s(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) s[i++] = x;
  return s;
}

Mask all_true(Eigen::Index n) { return Mask::Constant(n, true); }

TEST(Gae, ThreeStepFixture) {
  const auto t = load_trajectories(std::string(KF_SOURCE_DIR) + "/tests/fixtures/gae_t3.json");
  ASSERT_EQ(t.size(), 1u);
  const auto res = gae(t[0].rewards, t[0].values, {1.0, 0.95});
  EXPECT_NEAR(res.targets[0], 1.85375, 1e-12);
  EXPECT_NEAR(res.targets[1], 1.925, 1e-12);
  EXPECT_NEAR(res.targets[2], 2.0, 1e-12);
  EXPECT_NEAR(res.advantages[0], 1.35375, 1e-12);
}

TEST(Gae, MatchesDirectSum) { EXPECT_LE(gae_oracle_max_error(1000, 1), 1e-9); }

TEST(Gae, SingleStep) {
  const auto res = gae(seq({3.0}), seq({1.0}));
  EXPECT_DOUBLE_EQ(res.advantages[0], 2.0);
  EXPECT_DOUBLE_EQ(res.targets[0], 3.0);
}

TEST(Gae, LambdaOneIsMonteCarlo) {
  // gamma = lambda = 1: targets equal the undiscounted return-to-go.
  const auto res = gae(seq({0, 0, 0, -1}), seq({0.3, -2.0, 0.7, 0.1}), {1.0, 1.0});
  for (int t = 0; t < 4; ++t) EXPECT_NEAR(res.targets[t], -1.0, 1e-15);
}

TEST(Gae, LambdaZeroIsOneStep) {
  const auto v = seq({0.5, 0.25, 1.0});
  const auto res = gae(seq({0, 0, 2}), v, {0.9, 0.0});
  EXPECT_NEAR(res.advantages[0], 0.9 * 0.25 - 0.5, 1e-15);
  EXPECT_NEAR(res.advantages[1], 0.9 * 1.0 - 0.25, 1e-15);
  EXPECT_NEAR(res.advantages[2], 1.0, 1e-15);
}

TEST(Gae, FloatInstantiation) {
  Seq<float> r(3), v(3);
  r << 0.f, 0.f, 2.f;
  v << 0.5f, 0.5f, 0.5f;
  const auto res = gae(r, v, {1.0, 0.95});
  EXPECT_NEAR(res.targets[0], 1.85375f, 1e-5f);
}

TEST(Gae, RejectsBadShapes) {
  EXPECT_THROW(gae(seq({1, 2}), seq({1})), std::invalid_argument);
  EXPECT_THROW(gae(Seq<double>(0), Seq<double>(0)), std::invalid_argument);
}

TEST(Ppo, IdentityAndPessimismBound) {
  const auto res = ppo_properties(2000, 100000, 2, {0.2, 0.28});
  EXPECT_LE(res.identity_error, 1e-12);
  EXPECT_EQ(res.bound_violations, 0);
  EXPECT_EQ(res.tokens, 100000);
}

TEST(Ppo, AsymmetricClipValues) {
  // Positive advantage: upside capped at 1 + eps_higher.
  EXPECT_DOUBLE_EQ(ppo_terms(seq({2.0}), seq({1.0}))[0], 1.28);
  // Negative advantage: downside floor at 1 - eps_lower.
  EXPECT_DOUBLE_EQ(ppo_terms(seq({0.5}), seq({-1.0}))[0], -0.8);
  // Inside the trust region the term is rho * A.
  EXPECT_DOUBLE_EQ(ppo_terms(seq({1.1}), seq({2.0}))[0], 2.2);
  // Pessimism keeps the unclipped side when it is worse.
  EXPECT_DOUBLE_EQ(ppo_terms(seq({2.0}), seq({-1.0}))[0], -2.0);
  EXPECT_DOUBLE_EQ(ppo_terms(seq({0.5}), seq({1.0}))[0], 0.5);
}

TEST(Ppo, MaskExcludesTokens) {
  Mask m(3);
  m << true, false, true;
  const auto lp = seq({-1, -1, -1});
  EXPECT_DOUBLE_EQ(ppo_surrogate(lp, lp, seq({1, 100, 3}), m), 2.0);
  EXPECT_THROW(ppo_surrogate(lp, lp, seq({1, 1, 1}), Mask::Constant(3, false)),
               std::invalid_argument);
}

TEST(Ppo, NonFiniteRatioNamesToken) {
  const auto old_lp = seq({-1.0, -1000.0, -1.0});
  const auto new_lp = seq({-1.0, 0.0, -1.0});
  try {
    (void)ppo_surrogate(old_lp, new_lp, seq({1, 1, 1}), all_true(3));
    FAIL() << "expected NonFiniteRatioError";
  } catch (const NonFiniteRatioError& e) {
    EXPECT_EQ(e.index(), 1);
  }
  Mask m(3);
  m << true, false, true;
  EXPECT_NO_THROW(ppo_surrogate(old_lp, new_lp, seq({1, 1, 1}), m));
}

TEST(Ppo, BatchObjectiveAtIdentityRatio) {
  Trajectory t;
  t.rewards = seq({0, 0, 2});
  t.values = seq({0.5, 0.5, 0.5});
  t.logp_old = t.logp_new = seq({-1, -2, -3});
  t.loss_mask = all_true(3);
  const double expected = (1.35375 + 1.425 + 1.5) / 3.0;
  EXPECT_NEAR(ppo_batch_objective({t}), expected, 1e-12);
  EXPECT_NEAR(ppo_batch_objective({t, t}), expected, 1e-12);
  EXPECT_NEAR(ppo_batch_objective({t}, {}, {}, true), 0.0, 1e-7);
  EXPECT_THROW(ppo_batch_objective({}), std::invalid_argument);
}

TEST(Normalize, StandardizesMaskedEntries) {
  Mask m(4);
  m << true, true, false, true;
  const auto out = normalize_advantages(seq({1, 2, 50, 3}), m);
  EXPECT_NEAR(out[0] + out[1] + out[3], 0.0, 1e-12);
  EXPECT_NEAR((out[0] * out[0] + out[1] * out[1] + out[3] * out[3]) / 3.0, 1.0, 1e-6);
  EXPECT_DOUBLE_EQ(out[2], 50.0);
}

TEST(ValueLoss, HalfMeanSquaredError) {
  Mask m(3);
  m << true, true, false;
  EXPECT_DOUBLE_EQ(value_loss(seq({1, 2, 3}), seq({2, 4, 100}), m), 0.5 * (1 + 4) / 2.0);
  EXPECT_THROW(value_loss(seq({1}), seq({1, 2}), all_true(1)), std::invalid_argument);
  Trajectory t;
  t.rewards = seq({0, 0, 2});
  t.values = seq({0.5, 0.5, 0.5});
  t.logp_old = t.logp_new = seq({0, 0, 0});
  t.loss_mask = all_true(3);
  const double expected = 0.5 * (1.35375 * 1.35375 + 1.425 * 1.425 + 1.5 * 1.5) / 3.0;
  EXPECT_NEAR(value_loss_batch({t}), expected, 1e-12);
}

TEST(RatioDiagnostics, FlagsFloorTokens) {
  const auto old_lp = seq({-1.0, -30.0, std::log(0.5)});
  const auto new_lp = seq({-1.0, -29.0, std::log(0.25)});
  const auto s = ratio_diagnostics(old_lp, new_lp);
  EXPECT_EQ(s.n_floor_tokens, 1);
  ASSERT_EQ(s.flagged.size(), 1u);
  EXPECT_EQ(s.flagged[0], 1);
  EXPECT_NEAR(s.max_ratio, std::exp(1.0), 1e-12);
  const double mean = (1.0 + std::exp(1.0) + 0.5) / 3.0;
  const double var = ((1 - mean) * (1 - mean) + (std::exp(1.0) - mean) * (std::exp(1.0) - mean) +
                      (0.5 - mean) * (0.5 - mean)) / 3.0;
  EXPECT_NEAR(s.ratio_variance, var, 1e-12);
}

TEST(RatioDiagnostics, SkipsNonFinite) {
  const auto s = ratio_diagnostics(seq({-1000.0, -1.0}), seq({0.0, -1.0}));
  EXPECT_DOUBLE_EQ(s.max_ratio, 1.0);
  EXPECT_DOUBLE_EQ(s.ratio_variance, 0.0);
}

TEST(RftLoss, NegativeMaskedSum) {
  Mask m(3);
  m << true, false, true;
  EXPECT_DOUBLE_EQ(rft_loss(seq({-1, -5, -2}), m), 3.0);
  EXPECT_THROW(rft_loss(seq({-1}), Mask::Constant(1, false)), std::invalid_argument);
}

TEST(RftFilter, Reasons) {
  const RftTurn a{"Read", "{\"file_path\":\"x\"}", "d1", false};
  const RftTurn b{"Bash", "{\"command\":\"ls\"}", "d2", false};
  EXPECT_TRUE(rft_filter({a, b, a}, 3.0).kept);
  EXPECT_EQ(rft_filter({a}, 0.0).reasons, std::vector<std::string>{"nonpositive_reward"});
  EXPECT_EQ(rft_filter({a, a, a}, 2.0).reasons, std::vector<std::string>{"redundant_loop"});
  EXPECT_TRUE(rft_filter({a, a, b, a}, 2.0).kept);
  RftTurn differ = a;
  differ.observation_digest = "d3";
  EXPECT_TRUE(rft_filter({a, a, differ}, 2.0).kept);
  RftTurn bad = b;
  bad.schema_violation = true;
  EXPECT_EQ(rft_filter({a, bad}, 3.0).reasons, std::vector<std::string>{"schema_violation"});
  EXPECT_EQ(rft_filter({a, a, a, bad}, -1.0).reasons.size(), 3u);
  EXPECT_FALSE(rft_filter({a, a}, 1.0, 2).kept);
}

TEST(TrajectoryJson, RoundTripAndValidation) {
  Trajectory t;
  t.rewards = seq({0, 1});
  t.values = seq({0.25, -0.5});
  t.logp_old = seq({-1, -2});
  t.logp_new = seq({-1.5, -2.5});
  t.loss_mask = Mask(2);
  t.loss_mask << true, false;
  const auto back = trajectory_from_json(json::parse(trajectory_to_json(t).dump()));
  EXPECT_TRUE((back.values == t.values).all());
  EXPECT_TRUE((back.loss_mask == t.loss_mask).all());

  auto j = trajectory_to_json(t);
  j["values"] = {1.0};
  EXPECT_THROW(trajectory_from_json(j), DataError);
  j = trajectory_to_json(t);
  j["rewards"] = {1.0, 0.0};
  EXPECT_THROW(trajectory_from_json(j), DataError);
  j = trajectory_to_json(t);
  j.erase("logp_new");
  EXPECT_THROW(trajectory_from_json(j), DataError);
}

TEST(TrajectoryJson, LoadsLinesAndArrays) {
  TempDir dir("traj");
  Trajectory t;
  t.rewards = seq({0, 2});
  t.values = seq({0, 0});
  t.logp_old = t.logp_new = seq({0, 0});
  t.loss_mask = all_true(2);
  const auto line = trajectory_to_json(t).dump();
  std::ofstream(dir.path() / "a.jsonl") << line << "\n\n" << line << "\n";
  std::ofstream(dir.path() / "b.json") << "[" << line << "," << line << "," << line << "]";
  std::ofstream(dir.path() / "c.jsonl") << line << "\n{oops\n";
  EXPECT_EQ(load_trajectories((dir.path() / "a.jsonl").string()).size(), 2u);
  EXPECT_EQ(load_trajectories((dir.path() / "b.json").string()).size(), 3u);
  EXPECT_THROW(load_trajectories((dir.path() / "c.jsonl").string()), DataError);
}

}  // namespace
}  // namespace kftest
