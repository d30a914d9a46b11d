// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/reward.hpp"

#include <cmath>
#include <stdexcept>

namespace kernelforge {

bool significant_speedup(double t, double t0) {
  if (!(t > 0.0) || !(t0 > 0.0) || !std::isfinite(t) || !std::isfinite(t0)) {
    throw std::invalid_argument("significant_speedup: times must be positive and finite");
  }
  return (t0 - t) / t0 > kSignificantSpeedup;
}

int schedule_reward(const RewardInput& in) {
  if (!in.correct) return -1;
  const bool vs_eager = significant_speedup(in.t, in.t_eager);
  const bool vs_compile = significant_speedup(in.t, in.t_compile);
  if (vs_eager && vs_compile) return 3;
  if (vs_eager) return 2;
  return 1;
}

double speedup_reward(const RewardInput& in) {
  if (!in.correct) return -1.0;
  if (!(in.t > 0.0)) throw std::invalid_argument("speedup_reward: time must be positive");
  return in.t_compile / in.t;
}

std::string_view to_string(RewardVariant v) {
  return v == RewardVariant::kRobust ? "robust" : "speedup";
}

std::optional<RewardVariant> parse_reward_variant(std::string_view s) {
  if (s == "robust") return RewardVariant::kRobust;
  if (s == "speedup") return RewardVariant::kSpeedup;
  return std::nullopt;
}

RewardInput reward_input(const MeasurementReport& r) {
  RewardInput in;
  in.correct = r.correct && r.candidate_ms && r.eager_ms && r.compile_ms;
  if (in.correct) {
    in.t = *r.candidate_ms;
    in.t_eager = *r.eager_ms;
    in.t_compile = *r.compile_ms;
  }
  return in;
}

double trajectory_reward(RewardVariant variant, const std::optional<MeasurementReport>& best) {
  if (!best) return -1.0;
  const auto in = reward_input(*best);
  return variant == RewardVariant::kRobust ? schedule_reward(in) : speedup_reward(in);
}

double compile_ratio(const MeasurementReport& r) { return *r.compile_ms / *r.candidate_ms; }

std::optional<std::size_t> best_of_trajectory(const std::vector<MeasurementReport>& reports) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (!reward_input(reports[i]).correct) continue;
    if (!best || compile_ratio(reports[i]) > compile_ratio(reports[*best])) best = i;
  }
  return best;
}

}  // namespace kernelforge
