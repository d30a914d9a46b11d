// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kernelforge/cost_model.hpp"
#include "kernelforge/graph.hpp"
#include "kernelforge/rewrite.hpp"
#include "kernelforge/tensor.hpp"

namespace kernelforge {

inline constexpr int kVerifyInputCount = 5;
inline constexpr double kVerifyAtol = 1e-2;
inline constexpr double kVerifyRtol = 1e-2;

/// The executor could not serve the request (crash, timeout, unreachable).
class ExecutorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-request measurement settings.
struct ExecutorConfig {
  double atol = kVerifyAtol;
  double rtol = kVerifyRtol;
  int warmup = 5;
  int repeats = 20;

  friend bool operator==(const ExecutorConfig&, const ExecutorConfig&) = default;
};

struct Baselines {
  double eager_ms = 0.0;
  double compile_ms = 0.0;
};

struct VerifyOutcome {
  std::array<bool, kVerifyInputCount> verdicts{};
  std::optional<std::string> failure_reason;

  bool all_passed() const;
};

/// Result of verify-then-profile. Times are absent when not measured; an
/// incorrect candidate is never timed.
struct MeasurementReport {
  bool correct = false;
  std::optional<double> candidate_ms;
  std::optional<double> eager_ms;
  std::optional<double> compile_ms;
  std::array<bool, kVerifyInputCount> per_input_verdicts{};
  std::optional<std::string> failure_reason;
  std::string source_digest;

  friend bool operator==(const MeasurementReport&, const MeasurementReport&) = default;
};

nlohmann::json report_to_json(const MeasurementReport& r);
MeasurementReport report_from_json(const nlohmann::json& j);
nlohmann::json executor_config_to_json(const ExecutorConfig& c);
ExecutorConfig executor_config_from_json(const nlohmann::json& j);

/// Verification/profiling backend. Simulated in-process, or remote over the
/// wire protocol.
class Executor {
 public:
  virtual ~Executor() = default;

  /// Eager and compiled baseline timings. Throws ExecutorError when either
  /// mode fails to run.
  virtual Baselines baselines(const OperatorTask& task, const ExecutorConfig& config) = 0;

  /// Five seeded inputs, candidate vs reference under allclose.
  virtual VerifyOutcome verify(const OperatorTask& task, const KernelCandidate& candidate,
                               const ExecutorConfig& config) = 0;

  /// Verifies, then times the candidate only if every verdict passed.
  virtual MeasurementReport measure(const OperatorTask& task, const KernelCandidate& candidate,
                                    const ExecutorConfig& config) = 0;

  /// Eager outputs on inputs generated from `seed`. Throws ExecutorError.
  virtual std::vector<Tensor> run_eager(const OperatorTask& task, std::uint64_t seed) = 0;
};

/// Seeds of the five verification inputs of a task.
std::array<std::uint64_t, kVerifyInputCount> verification_seeds(const OperatorTask& task);

/// Interprets an applied candidate, faults included. Throws NonFiniteError.
std::vector<Tensor> evaluate_candidate(const AppliedCandidate& applied,
                                       const std::vector<Tensor>& inputs);

/// Noisy timing: cost * (1 + eps_i), eps_i ~ N(0, sigma) seeded per
/// measurement index; warm-up draws come from a separate stream and are
/// discarded; returns the mean of the `repeats` timed draws.
double simulated_profile(double cost_ms, const CostModelParams& params, std::uint64_t stream,
                         int warmup, int repeats);

/// Deterministic simulated backend over the cost model and the reference
/// interpreter. One instance serves one measurement at a time.
class SimulatedExecutor final : public Executor {
 public:
  explicit SimulatedExecutor(CostModelParams params = {});

  const CostModelParams& params() const { return params_; }

  Baselines baselines(const OperatorTask& task, const ExecutorConfig& config) override;
  VerifyOutcome verify(const OperatorTask& task, const KernelCandidate& candidate,
                       const ExecutorConfig& config) override;
  MeasurementReport measure(const OperatorTask& task, const KernelCandidate& candidate,
                            const ExecutorConfig& config) override;
  std::vector<Tensor> run_eager(const OperatorTask& task, std::uint64_t seed) override;

  /// Noiseless cost of a candidate's partition over its rewritten graph.
  double candidate_cost_ms(const OperatorTask& task, const KernelCandidate& candidate) const;

 private:
  CostModelParams params_;
};

}  // namespace kernelforge
