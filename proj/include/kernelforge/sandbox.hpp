// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "kernelforge/executor.hpp"
#include "kernelforge/tools.hpp"
#include "kernelforge/workspace.hpp"

namespace kernelforge {

struct Budgets {
  int max_turns_train = 150;
  int max_turns_eval = 200;
  std::size_t context_tokens = 131072;
};

enum class EpisodeMode { kTrain, kEval };

struct EnvConfig {
  EpisodeMode mode = EpisodeMode::kTrain;
  Budgets budgets;
  std::size_t observation_cap = kDefaultObservationCap;
  ExecutorConfig executor;

  int max_turns() const {
    return mode == EpisodeMode::kTrain ? budgets.max_turns_train : budgets.max_turns_eval;
  }
};

struct Submit {
  KernelCandidate candidate;
  friend bool operator==(const Submit&, const Submit&) = default;
};

struct Stop {
  friend bool operator==(const Stop&, const Stop&) = default;
};

using Action = std::variant<ToolCall, Submit, Stop>;

nlohmann::json action_to_json(const Action& a);
/// Throws DataError.
Action action_from_json(const nlohmann::json& j);

enum class DoneReason { kBudget, kPolicyStop, kEnvError };
std::string_view to_string(DoneReason r);

struct Turn {
  int turn_index = 0;
  Action action;
  Observation observation;
};

struct EpisodeState {
  OperatorTask task;
  int turn = 0;
  std::size_t tokens_used = 0;
  std::vector<Turn> history;
  std::vector<MeasurementReport> reports;
  std::optional<std::size_t> best_report;  // index into reports
  bool done = false;
  std::optional<DoneReason> done_reason;
  std::optional<Baselines> last_profile;  // set by the profiling utility
};

/// One episode: a workspace, its tool session and an executor. The episode
/// owns the workspace root exclusively.
class SandboxEnv {
 public:
  SandboxEnv(OperatorTask task, const std::filesystem::path& root, Executor& executor,
             EnvConfig config = {}, std::string_view skill_asset = default_skill_asset());

  const EpisodeState& state() const { return state_; }
  const Workspace& workspace() const { return session_->workspace(); }
  const EnvConfig& config() const { return config_; }

  /// Advances one turn. Throws std::logic_error when the episode is done.
  Observation step(const Action& action);

 private:
  Observation submit(const KernelCandidate& candidate);
  std::string run_profiling();
  std::string run_verification();
  std::string run_compile();

  EnvConfig config_;
  Executor& executor_;
  EpisodeState state_;
  std::unique_ptr<ToolSession> session_;
  std::optional<KernelCandidate> last_candidate_;
};

/// Deterministic decision maker.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string id() const = 0;
  virtual Action next(const EpisodeState& state) = 0;
};

/// The candidate the scripted policy submits: greedy whitelisted rewrites
/// (rule order, first match, repeated to a fixed point), then maximal fusion
/// over the rewritten graph.
KernelCandidate scripted_candidate(const OpGraph& graph);

/// Fixed script keyed on the turn count: profile, read model.py, write a kernel, read and rewrite
/// model_new.py, submit scripted_candidate, verify, stop. Stops at once on
/// an empty graph. At most 8 actions.
class ScriptedPolicy final : public Policy {
 public:
  std::string id() const override { return "scripted-v1"; }
  Action next(const EpisodeState& state) override;
};

/// Stops immediately.
class StopPolicy final : public Policy {
 public:
  std::string id() const override { return "stop"; }
  Action next(const EpisodeState&) override { return Stop{}; }
};

}  // namespace kernelforge
