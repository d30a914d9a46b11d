// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kernelforge/metrics.hpp"
#include "kernelforge/reward.hpp"
#include "kernelforge/rl.hpp"
#include "kernelforge/sandbox.hpp"
#include "kernelforge/synth.hpp"

namespace kernelforge {

// ---------------------------------------------------------------------------
// Configuration: flat "key = value" text, '#' starts a comment.

struct RunConfig {
  std::string executor = "simulated";  // simulated | external
  std::string executor_endpoint;       // host:port for external
  EpisodeMode mode = EpisodeMode::kTrain;
  Budgets budgets;
  std::size_t observation_cap = kDefaultObservationCap;
  CostModelParams cost;
  ExecutorConfig measurement;
  RewardVariant reward_variant = RewardVariant::kRobust;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out = "kforge-out";
  bool keep_workspaces = false;
  GaeParams gae;
  ClipParams clip;
  bool normalize_advantages = false;
  double floor_logp = kDefaultFloorLogp;
  int redundant_loop_threshold = kRedundantLoopThreshold;
  SynthConfig synth;

  EnvConfig env_config() const;
};

/// Applies `key = value` lines on top of `base`. Throws DataError on unknown
/// keys or unparsable values, naming the line.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// Sets one key. Throws DataError.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
/// Every key with its current value, sorted by key.
std::string config_to_text(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Episode logs.

struct TurnLog {
  int turn_index = 0;
  nlohmann::json action;
  std::string observation_digest;
  std::size_t observation_bytes = 0;
  bool error = false;
  bool schema_violation = false;
};

struct EpisodeLog {
  std::string task_id;
  std::optional<LevelTag> level;
  std::string policy_id;
  std::uint64_t seed = 0;
  std::string mode;
  std::vector<TurnLog> turns;
  std::vector<MeasurementReport> measurements;
  std::optional<std::size_t> best_index;
  RewardVariant reward_variant = RewardVariant::kRobust;
  double final_reward = -1.0;
  std::string done_reason;
  int turns_used = 0;
  std::size_t tokens_used = 0;
};

/// Canonical form: keys sorted, one line.
nlohmann::json episode_to_json(const EpisodeLog& log);
EpisodeLog episode_from_json(const nlohmann::json& j);
std::string canonical_line(const EpisodeLog& log);

/// Reward recomputed from a log's measurements: -1 on env_error, else the
/// variant applied to best_of_trajectory.
double recompute_reward(const EpisodeLog& log);

/// RFT verdict of a logged episode against its final reward.
RftVerdict rft_filter_log(const EpisodeLog& log, int loop_threshold = kRedundantLoopThreshold);

/// Task result of an episode: passed iff a correct measurement exists;
/// speedups from the best one.
TaskResult task_result(const EpisodeLog& log);

/// Append-only JSONL store. Appends are serialized through one writer.
class EpisodeStore {
 public:
  explicit EpisodeStore(std::filesystem::path file);

  void append(const EpisodeLog& log);
  void append_all(const std::vector<EpisodeLog>& logs);

  /// Reads records in file order. A trailing record without its newline is
  /// ignored and reported in `warnings`; an unparsable complete line throws
  /// DataError naming its byte offset.
  std::vector<EpisodeLog> scan(const std::function<bool(const EpisodeLog&)>& keep = {},
                               std::vector<std::string>* warnings = nullptr) const;

  const std::filesystem::path& path() const { return file_; }

 private:
  std::filesystem::path file_;
  mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Episodes.

using ExecutorFactory = std::function<std::unique_ptr<Executor>(std::uint64_t episode_seed)>;
using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

/// Simulated executor seeded per episode, or a remote connection to
/// `executor_endpoint` (falling back to $KERNELFORGE_EXECUTOR).
ExecutorFactory make_executor_factory(const RunConfig& cfg);

/// Episode seed: derived from the run seed and the task id.
std::uint64_t episode_seed(const RunConfig& cfg, const std::string& task_id);

/// Drives the step loop to termination in a fresh workspace under
/// `workspace_root`. Executor failures end the episode as env_error.
EpisodeLog run_episode(const OperatorTask& task, Policy& policy, const ExecutorFactory& executors,
                       const RunConfig& cfg, const std::filesystem::path& workspace_root);

/// Runs every task; task i goes to worker stable_hash64(task_id) % workers.
/// Logs come back in task order, identical for any worker count.
std::vector<EpisodeLog> run_episodes(const std::vector<OperatorTask>& tasks,
                                     const PolicyFactory& policies,
                                     const ExecutorFactory& executors, const RunConfig& cfg,
                                     const std::filesystem::path& workspace_root);

}  // namespace kernelforge
