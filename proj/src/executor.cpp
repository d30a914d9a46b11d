// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/executor.hpp"

#include <map>
#include <random>

#include "kernelforge/digest.hpp"
#include "kernelforge/interpreter.hpp"
#include "kernelforge/task_io.hpp"

namespace kernelforge {

using nlohmann::json;

bool VerifyOutcome::all_passed() const {
  for (bool v : verdicts) {
    if (!v) return false;
  }
  return true;
}

json report_to_json(const MeasurementReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"correct", r.correct},
              {"candidate_ms", opt(r.candidate_ms)},
              {"eager_ms", opt(r.eager_ms)},
              {"compile_ms", opt(r.compile_ms)},
              {"per_input_verdicts", r.per_input_verdicts},
              {"failure_reason", r.failure_reason ? json(*r.failure_reason) : json(nullptr)},
              {"source_digest", r.source_digest}};
}

MeasurementReport report_from_json(const json& j) {
  MeasurementReport r;
  try {
    r.correct = j.at("correct").get<bool>();
    auto opt = [&](const char* key) -> std::optional<double> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      return j[key].get<double>();
    };
    r.candidate_ms = opt("candidate_ms");
    r.eager_ms = opt("eager_ms");
    r.compile_ms = opt("compile_ms");
    const auto v = j.at("per_input_verdicts").get<std::vector<bool>>();
    if (v.size() != kVerifyInputCount) throw DataError("per_input_verdicts must have 5 entries");
    for (std::size_t i = 0; i < v.size(); ++i) r.per_input_verdicts[i] = v[i];
    if (j.contains("failure_reason") && !j["failure_reason"].is_null()) {
      r.failure_reason = j["failure_reason"].get<std::string>();
    }
    r.source_digest = j.value("source_digest", std::string());
  } catch (const json::exception& e) {
    throw DataError(std::string("measurement report: ") + e.what());
  }
  return r;
}

json executor_config_to_json(const ExecutorConfig& c) {
  return json{{"atol", c.atol}, {"rtol", c.rtol}, {"warmup", c.warmup}, {"repeats", c.repeats}};
}

ExecutorConfig executor_config_from_json(const json& j) {
  ExecutorConfig c;
  if (!j.is_object()) return c;
  try {
    c.atol = j.value("atol", c.atol);
    c.rtol = j.value("rtol", c.rtol);
    c.warmup = j.value("warmup", c.warmup);
    c.repeats = j.value("repeats", c.repeats);
  } catch (const json::exception& e) {
    throw DataError(std::string("executor config: ") + e.what());
  }
  if (c.repeats < 1 || c.warmup < 0) throw DataError("executor config: repeats >= 1, warmup >= 0");
  return c;
}

std::array<std::uint64_t, kVerifyInputCount> verification_seeds(const OperatorTask& task) {
  std::array<std::uint64_t, kVerifyInputCount> seeds{};
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    seeds[i] = derive_seed(task.input_policy.base_seed, 0x7665726966790000ULL + i);
  }
  return seeds;
}

std::vector<Tensor> evaluate_candidate(const AppliedCandidate& applied,
                                       const std::vector<Tensor>& inputs) {
  const auto& g = applied.graph;
  std::map<std::string, Tensor> env;
  for (std::size_t i = 0; i < inputs.size(); ++i) env.emplace(input_ref(i), inputs[i]);
  for (const auto& node : g.nodes) {
    std::vector<const Tensor*> operands;
    for (const auto& r : node.inputs) operands.push_back(&env.at(r));
    Tensor out = evaluate_node(node, operands);
    for (const auto& f : applied.faults) {
      if (f.node_id != node.id) continue;
      if (f.kind == InjectedFault::Kind::kScaleOutput) {
        out.values() *= f.value;
      } else {
        out.values().setConstant(f.value);
      }
    }
    if (!out.all_finite()) throw NonFiniteError(node.id);
    env.insert_or_assign(node.id, std::move(out));
  }
  std::vector<Tensor> outs;
  for (const auto& o : g.outputs) outs.push_back(env.at(o));
  return outs;
}

double simulated_profile(double cost_ms, const CostModelParams& params, std::uint64_t stream,
                         int warmup, int repeats) {
  if (repeats < 1) throw std::invalid_argument("profile: repeats must be >= 1");
  if (warmup < 0) throw std::invalid_argument("profile: warmup must be >= 0");
  const auto base = derive_seed(params.rng_seed, stream);
  auto draw = [&](std::uint64_t tag, int i) {
    std::mt19937_64 rng(derive_seed(base, tag + static_cast<std::uint64_t>(i)));
    std::normal_distribution<double> eps(0.0, params.noise_relative_sigma);
    return params.noise_relative_sigma > 0.0 ? eps(rng) : 0.0;
  };
  // Warm-up draws come from their own stream and never enter the mean.
  for (int i = 0; i < warmup; ++i) (void)draw(0x5741524d00000000ULL, i);
  double factor = 0.0;
  for (int i = 0; i < repeats; ++i) factor += 1.0 + draw(0x54494d4500000000ULL, i);
  return cost_ms * (factor / repeats);
}

SimulatedExecutor::SimulatedExecutor(CostModelParams params) : params_(params) {
  params_.validate();
}

std::vector<Tensor> SimulatedExecutor::run_eager(const OperatorTask& task, std::uint64_t seed) {
  if (auto v = validate_graph(task.graph); !v.ok()) {
    throw ExecutorError("task " + task.task_id + " does not validate: " + v.to_string());
  }
  try {
    return evaluate_reference(task.graph, generate_inputs(task, seed));
  } catch (const std::exception& e) {
    throw ExecutorError("eager run failed: " + std::string(e.what()));
  }
}

Baselines SimulatedExecutor::baselines(const OperatorTask& task, const ExecutorConfig& config) {
  // Both modes must actually execute; the simulated compile path shares the
  // interpreter, so a failing eager run fails both.
  (void)run_eager(task, verification_seeds(task)[0]);
  Baselines b;
  b.eager_ms = simulated_profile(cost_eager(task.graph, params_), params_,
                                 stable_hash64(task.task_id + "/eager"), config.warmup,
                                 config.repeats);
  b.compile_ms = simulated_profile(cost_compiled(task.graph, params_), params_,
                                   stable_hash64(task.task_id + "/compile"), config.warmup,
                                   config.repeats);
  return b;
}

VerifyOutcome SimulatedExecutor::verify(const OperatorTask& task, const KernelCandidate& candidate,
                                        const ExecutorConfig& config) {
  VerifyOutcome out;
  AppliedCandidate applied;
  try {
    applied = apply_candidate(candidate, task.graph);
  } catch (const RewriteError& e) {
    out.failure_reason = std::string("candidate rejected: ") + e.what();
    return out;
  }
  const auto seeds = verification_seeds(task);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const auto inputs = generate_inputs(task, seeds[i]);
    std::vector<Tensor> expected;
    try {
      expected = evaluate_reference(task.graph, inputs);
    } catch (const NonFiniteError& e) {
      out.failure_reason = std::string("reference ") + e.what();
      continue;
    }
    std::vector<Tensor> actual;
    try {
      actual = evaluate_candidate(applied, inputs);
    } catch (const NonFiniteError& e) {
      out.failure_reason = std::string("candidate ") + e.what();
      continue;
    }
    bool ok = actual.size() == expected.size();
    for (std::size_t k = 0; ok && k < actual.size(); ++k) {
      ok = actual[k].shape() == expected[k].shape() &&
           allclose(actual[k], expected[k], config.atol, config.rtol);
    }
    out.verdicts[i] = ok;
    if (!ok && !out.failure_reason) {
      out.failure_reason = "output mismatch on input " + std::to_string(i);
    }
  }
  return out;
}

double SimulatedExecutor::candidate_cost_ms(const OperatorTask& task,
                                            const KernelCandidate& candidate) const {
  const auto applied = apply_candidate(candidate, task.graph);
  return partition_cost_ms(applied.graph, applied.partition, params_);
}

MeasurementReport SimulatedExecutor::measure(const OperatorTask& task,
                                             const KernelCandidate& candidate,
                                             const ExecutorConfig& config) {
  MeasurementReport report;
  report.source_digest = candidate.claimed_source_digest;
  const auto verdict = verify(task, candidate, config);
  report.per_input_verdicts = verdict.verdicts;
  const auto base = baselines(task, config);
  report.eager_ms = base.eager_ms;
  report.compile_ms = base.compile_ms;
  if (!verdict.all_passed()) {
    report.failure_reason = verdict.failure_reason.value_or("verification failed");
    return report;
  }
  report.correct = true;
  report.candidate_ms =
      simulated_profile(candidate_cost_ms(task, candidate), params_,
                        stable_hash64(task.task_id + "/candidate/" +
                                      candidate_to_json(candidate).dump()),
                        config.warmup, config.repeats);
  return report;
}

}  // namespace kernelforge
