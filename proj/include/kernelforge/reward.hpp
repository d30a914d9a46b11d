// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "kernelforge/executor.hpp"

namespace kernelforge {

inline constexpr double kSignificantSpeedup = 0.05;

/// b(t, t0): (t0 - t) / t0 > 5%, strictly. Throws std::invalid_argument
/// unless both times are positive and finite.
bool significant_speedup(double t, double t0);

/// t_eager is the eager (native) baseline time.
struct RewardInput {
  bool correct = false;
  double t = 0.0;
  double t_eager = 0.0;
  double t_compile = 0.0;
};

/// -1 if incorrect; 3 when significantly faster than both baselines; 2 when
/// only faster than eager; 1 otherwise.
int schedule_reward(const RewardInput& in);

/// -1 if incorrect, else t_compile / t.
double speedup_reward(const RewardInput& in);

enum class RewardVariant { kRobust, kSpeedup };

std::string_view to_string(RewardVariant v);
std::optional<RewardVariant> parse_reward_variant(std::string_view s);

/// Reward input from a measurement; incorrect or untimed reports map to
/// correct = false.
RewardInput reward_input(const MeasurementReport& report);

/// Reward of a trajectory: the variant applied to its best report, -1 when
/// none is correct.
double trajectory_reward(RewardVariant variant, const std::optional<MeasurementReport>& best);

/// Index of the correct report with the largest t_compile / t; ties go to
/// the earliest. nullopt when no report is correct.
std::optional<std::size_t> best_of_trajectory(const std::vector<MeasurementReport>& reports);

/// t_compile / t of a correct, timed report.
double compile_ratio(const MeasurementReport& report);

}  // namespace kernelforge
