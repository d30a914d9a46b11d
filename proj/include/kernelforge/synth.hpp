// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kernelforge/executor.hpp"
#include "kernelforge/graph.hpp"

namespace kernelforge {

/// Synthesis could not produce a task (bad k, no compatible chain, ...).
class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TemplateSource { kTorch, kTransformers };

struct SeedTemplate {
  std::string name;
  TemplateSource source = TemplateSource::kTorch;
  OpGraph graph;

  /// Templates from the transformers source are never sampled into chains.
  bool composable() const { return source == TemplateSource::kTorch; }
};

/// Catalog file: {"templates": [{name, source: "torch"|"transformers",
/// inputs, nodes, outputs}]}, graph fields as in task files.
struct SeedCatalog {
  std::vector<SeedTemplate> entries;  // sorted by name

  std::vector<const SeedTemplate*> composable() const;
  std::vector<const SeedTemplate*> transformer_like() const;
};

/// Throws DataError on parse errors, duplicate names or invalid templates.
SeedCatalog catalog_from_json(const nlohmann::json& j);
SeedCatalog ingest_seed_catalog(const std::filesystem::path& path);

inline constexpr int kMaxCompositeDepth = 5;
inline constexpr int kSynthesisRetries = 3;

/// Chains k distinct composable templates sampled uniformly from a stream
/// seeded by `seed`. Stage i's node ids are prefixed "s<i>_". Between stages
/// the previous stage's first output feeds the next template's first input:
///   1. equal shapes bind directly;
///   2. otherwise the first input is re-shaped to the incoming shape, and
///      every other input that had the same shape follows it, if the
///      template still validates;
///   3. otherwise a mean-reduction adapter over trailing axes is inserted
///      when that yields the expected shape.
/// A sample with an irreconcilable junction is redrawn, at most
/// kSynthesisRetries times. Throws SynthesisError.
OperatorTask synthesize_composite(const SeedCatalog& catalog, std::uint64_t seed, int k);

/// A standalone transformers-source template as a task.
OperatorTask synthesize_transformer_like(const SeedCatalog& catalog, std::uint64_t seed);

struct FilterConfig {
  double min_eager_ms = 1.0;  // inclusive
  double max_eager_ms = 100.0;  // inclusive
  double atol = kVerifyAtol;
  double rtol = kVerifyRtol;
  double constant_span = 1e-6;
};

struct FilterCriteria {
  bool runs_both_modes = false;
  bool deterministic = false;
  bool output_distinguishable = false;
  bool workload_in_range = false;
};

struct FilterVerdict {
  bool accepted = false;
  FilterCriteria criteria;
  double eager_ms = 0.0;
  std::optional<std::string> reject_reason;
};

/// Applies the four acceptance criteria. Executor failures become
/// runs_both_modes = false with the failure as reject reason. A tensor
/// counts as constant when it has at least two elements spanning less than
/// `constant_span`.
FilterVerdict filter_task(const OperatorTask& task, Executor& executor,
                          const ExecutorConfig& exec_config = {},
                          const FilterConfig& config = {});

inline constexpr int kHistogramBins = 20;

struct DecontaminationResult {
  std::vector<OperatorTask> kept;
  std::vector<OperatorTask> removed;
  std::vector<double> max_similarity;  // per training task, input order
  std::array<int, kHistogramBins> histogram{};  // max-sim of kept tasks over [0, 1]
};

/// Removes every training task whose maximum similarity to an evaluation
/// task exceeds `threshold` (strictly). Throws std::invalid_argument unless
/// threshold is in (0, 1].
DecontaminationResult decontaminate(const std::vector<OperatorTask>& train,
                                    const std::vector<OperatorTask>& eval,
                                    double threshold = 0.9);

struct CompositionRow {
  std::string category;  // "x1".."x5", "transformer-like"
  std::int64_t count = 0;
  double percent = 0.0;
};

/// Seed tasks count as x1. Throws std::invalid_argument on empty input.
std::vector<CompositionRow> composition_report(const std::vector<Provenance>& provenances);
std::vector<CompositionRow> composition_report(const std::vector<OperatorTask>& tasks);
std::string render_composition(const std::vector<CompositionRow>& rows);

struct SynthConfig {
  int count = 200;
  std::uint64_t seed = 0;
  // Sampling weights for x1..x5 and transformer-like.
  std::array<double, kMaxCompositeDepth> depth_weights{3.40, 83.77, 7.62, 2.80, 1.23};
  double transformer_weight = 1.18;
  int max_attempts_per_task = 20;
  double decontamination_threshold = 0.9;
  FilterConfig filter;
  ExecutorConfig executor;
};

struct SynthResult {
  std::vector<OperatorTask> tasks;
  nlohmann::json manifest;
};

/// Synthesize, filter, then decontaminate against `eval`. Task ids are
/// "synth-NNNNN" in acceptance order.
SynthResult run_synth_pipeline(const SeedCatalog& catalog, const SynthConfig& config,
                               Executor& executor, const std::vector<OperatorTask>& eval = {});

/// Writes one file per task plus manifest.json.
void write_dataset(const std::filesystem::path& dir, const std::vector<OperatorTask>& tasks,
                   const nlohmann::json& manifest);

nlohmann::json filter_verdict_to_json(const FilterVerdict& v);

}  // namespace kernelforge
