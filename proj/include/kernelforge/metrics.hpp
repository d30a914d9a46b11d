// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kernelforge/graph.hpp"

namespace kernelforge {

/// One evaluated task. Speedups are present iff passed.
struct TaskResult {
  std::string task_id;
  LevelTag level = LevelTag::kL1;
  bool passed = false;
  std::optional<double> speedup_vs_eager;
  std::optional<double> speedup_vs_compile;

  friend bool operator==(const TaskResult&, const TaskResult&) = default;
};

nlohmann::json result_to_json(const TaskResult& r);
/// Throws DataError on schema violations.
TaskResult result_from_json(const nlohmann::json& j);

/// Results file: one JSON object per line.
std::vector<TaskResult> load_results(const std::filesystem::path& path);
void save_results(const std::filesystem::path& path, const std::vector<TaskResult>& results);

/// Table row. Rates are percentages of all tasks; geomeans cover passed
/// tasks only and are absent when none passed.
struct LevelReport {
  std::string label;  // "L1", "L2", "L3", "Overall"
  int n_tasks = 0;
  double pass_rate = 0.0;
  double faster_rate_eager = 0.0;
  double faster_rate_compile = 0.0;
  std::optional<double> geomean_eager;
  std::optional<double> geomean_compile;
};

/// exp(mean ln x). nullopt on empty input; throws on nonpositive values.
std::optional<double> geomean(const std::vector<double>& xs);

LevelReport level_report(const std::vector<TaskResult>& results, const std::string& label);

/// Problem counts per level used to weight the overall row.
inline const std::map<LevelTag, double> kDefaultLevelWeights = {
    {LevelTag::kL1, 100.0}, {LevelTag::kL2, 100.0}, {LevelTag::kL3, 50.0}};

/// Overall row: rate = sum(w * rate) / sum(w); geomean = exp(sum(w * ln g) /
/// sum(w)) over levels that have one. Levels without tasks are skipped.
/// Throws std::invalid_argument on nonpositive weights.
LevelReport aggregate_overall(const std::map<LevelTag, LevelReport>& levels,
                              const std::map<LevelTag, double>& weights = kDefaultLevelWeights);

struct EvalReport {
  std::vector<LevelReport> rows;  // L1, L2, L3, Overall (levels without tasks omitted)
};

EvalReport evaluate_results(const std::vector<TaskResult>& results,
                            const std::map<LevelTag, double>& weights = kDefaultLevelWeights);

/// Half-up rounding at `digits` decimals, tolerant of binary representation
/// error (96.85 rounds to 96.9).
double round_half_up(double x, int digits);

/// Fixed-width table: Level, Tasks, Pass Rate, Faster Rate vs Eager and vs
/// Compile, Speed-up vs Eager and vs Compile. Percentages at one decimal.
std::string render_report(const EvalReport& report);
/// Machine-readable twin of render_report with the same rounding.
nlohmann::json eval_report_to_json(const EvalReport& report);

}  // namespace kernelforge
