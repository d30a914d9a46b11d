// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "kernelforge/interpreter.hpp"
#include "kernelforge/similarity.hpp"
#include "kernelforge/task_io.hpp"

namespace kernelforge {

using nlohmann::json;

namespace {

std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1p-53; }

std::optional<TemplateSource> parse_source(const std::string& s) {
  if (s == "torch") return TemplateSource::kTorch;
  if (s == "transformers") return TemplateSource::kTransformers;
  return std::nullopt;
}

}  // namespace

std::vector<const SeedTemplate*> SeedCatalog::composable() const {
  std::vector<const SeedTemplate*> out;
  for (const auto& e : entries) {
    if (e.composable()) out.push_back(&e);
  }
  return out;
}

std::vector<const SeedTemplate*> SeedCatalog::transformer_like() const {
  std::vector<const SeedTemplate*> out;
  for (const auto& e : entries) {
    if (!e.composable()) out.push_back(&e);
  }
  return out;
}

SeedCatalog catalog_from_json(const json& j) {
  if (!j.is_object() || !j.contains("templates") || !j["templates"].is_array()) {
    throw DataError("catalog: expected an object with a 'templates' array");
  }
  SeedCatalog catalog;
  std::set<std::string> names;
  for (const auto& t : j["templates"]) {
    SeedTemplate e;
    try {
      e.name = t.at("name").get<std::string>();
      const auto source = parse_source(t.value("source", std::string("torch")));
      if (!source) throw DataError("catalog: template " + e.name + " has an unknown source");
      e.source = *source;
    } catch (const json::exception& ex) {
      throw DataError(std::string("catalog: ") + ex.what());
    }
    e.graph = graph_from_json(t);
    if (!names.insert(e.name).second) throw DataError("catalog: duplicate template name " + e.name);
    if (auto v = validate_graph(e.graph); !v.ok()) {
      throw DataError("catalog: template " + e.name + " does not validate: " + v.to_string());
    }
    if (e.graph.inputs.empty() || e.graph.nodes.empty()) {
      throw DataError("catalog: template " + e.name + " needs at least one input and one node");
    }
    catalog.entries.push_back(std::move(e));
  }
  std::sort(catalog.entries.begin(), catalog.entries.end(),
            [](const auto& a, const auto& b) { return a.name < b.name; });
  return catalog;
}

SeedCatalog ingest_seed_catalog(const std::filesystem::path& path) {
  try {
    return catalog_from_json(json::parse(read_text_file(path)));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

namespace {

std::string prefixed(const std::string& prefix, const std::string& id) { return prefix + id; }

// Appends one template stage to `out`. `incoming` is the reference feeding
// the template's first input (nullopt for the first stage). Returns the
// reference of the stage's first output, or nullopt when the junction cannot
// be reconciled.
std::optional<std::string> append_stage(OpGraph& out, const SeedTemplate& tpl, int stage,
                                        const std::optional<std::string>& incoming,
                                        const Shape& incoming_shape) {
  const std::string prefix = "s" + std::to_string(stage) + "_";
  OpGraph g = tpl.graph;
  std::vector<OperatorNode> adapters;
  std::string feed;

  if (incoming) {
    const Shape expected = g.inputs[0].shape;
    feed = *incoming;
    if (incoming_shape != expected) {
      OpGraph rebound = g;
      for (auto& spec : rebound.inputs) {
        if (spec.shape == expected) spec.shape = incoming_shape;
      }
      if (validate_graph(rebound).ok()) {
        g = std::move(rebound);
      } else {
        // Mean over trailing axes until the ranks agree.
        Shape s = incoming_shape;
        while (s.size() > expected.size()) {
          OperatorNode r;
          r.id = prefix + "adapt" + std::to_string(adapters.size());
          r.kind = NodeKind::kReduction;
          r.params.reduce = ReduceOp::kMean;
          r.params.axis = static_cast<std::int64_t>(s.size()) - 1;
          r.inputs = {feed};
          feed = r.id;
          s.pop_back();
          adapters.push_back(std::move(r));
        }
        if (s != expected) return std::nullopt;
      }
    }
  }

  std::map<std::string, std::string> rename;
  for (std::size_t i = 0; i < g.inputs.size(); ++i) {
    if (i == 0 && incoming) {
      rename[input_ref(0)] = feed;
      continue;
    }
    rename[input_ref(i)] = input_ref(out.inputs.size());
    out.inputs.push_back(g.inputs[i]);
  }
  for (const auto& n : g.nodes) rename[n.id] = prefixed(prefix, n.id);
  for (auto& a : adapters) out.nodes.push_back(std::move(a));
  for (auto n : g.nodes) {
    n.id = rename.at(n.id);
    for (auto& r : n.inputs) r = rename.at(r);
    out.nodes.push_back(std::move(n));
  }
  return rename.at(g.outputs.front());
}

}  // namespace

OperatorTask synthesize_composite(const SeedCatalog& catalog, std::uint64_t seed, int k) {
  if (k < 1 || k > kMaxCompositeDepth) {
    throw SynthesisError("composite depth must be in 1.." + std::to_string(kMaxCompositeDepth) +
                         ", got " + std::to_string(k));
  }
  const auto pool = catalog.composable();
  if (static_cast<int>(pool.size()) < k) {
    throw SynthesisError("catalog has " + std::to_string(pool.size()) +
                         " composable templates, need " + std::to_string(k));
  }
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
  for (int attempt = 0; attempt <= kSynthesisRetries; ++attempt) {
    // Partial Fisher-Yates: the first k slots are a uniform sample without
    // replacement.
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      const auto j = static_cast<std::size_t>(i) + below(rng, idx.size() - static_cast<std::size_t>(i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    OpGraph g;
    std::optional<std::string> current;
    Shape current_shape;
    bool ok = true;
    for (int s = 0; s < k && ok; ++s) {
      current = append_stage(g, *pool[idx[static_cast<std::size_t>(s)]], s, current, current_shape);
      if (!current) {
        ok = false;
        break;
      }
      try {
        g.outputs = {*current};
        current_shape = infer_shapes(g).at(*current);
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) continue;
    g.outputs = {*current};
    if (!validate_graph(g).ok()) continue;
    OperatorTask task;
    task.task_id = "composite-k" + std::to_string(k) + "-" + std::to_string(seed);
    task.graph = std::move(g);
    task.provenance = Provenance::composite(k);
    task.input_policy.base_seed = seed;
    return task;
  }
  throw SynthesisError("no shape-compatible chain of depth " + std::to_string(k) + " after " +
                       std::to_string(kSynthesisRetries) + " retries");
}

OperatorTask synthesize_transformer_like(const SeedCatalog& catalog, std::uint64_t seed) {
  const auto pool = catalog.transformer_like();
  if (pool.empty()) throw SynthesisError("catalog has no transformers-source templates");
  std::mt19937_64 rng(derive_seed(seed, 0x7472616eULL));
  const auto& tpl = *pool[below(rng, pool.size())];
  OperatorTask task;
  task.task_id = "transformer-" + std::to_string(seed);
  (void)append_stage(task.graph, tpl, 0, std::nullopt, {});
  task.graph.outputs.clear();
  for (const auto& o : tpl.graph.outputs) task.graph.outputs.push_back("s0_" + o);
  task.provenance = Provenance::transformer_like();
  task.input_policy.base_seed = seed;
  return task;
}

namespace {

bool is_constant(const Tensor& t, double span) {
  if (t.size() < 2) return false;
  return t.values().maxCoeff() - t.values().minCoeff() < span;
}

}  // namespace

FilterVerdict filter_task(const OperatorTask& task, Executor& executor,
                          const ExecutorConfig& exec_config, const FilterConfig& config) {
  FilterVerdict v;
  const auto seeds = verification_seeds(task);
  std::vector<Tensor> first, repeat, other;
  try {
    const auto b = executor.baselines(task, exec_config);
    v.eager_ms = b.eager_ms;
    first = executor.run_eager(task, seeds[0]);
    repeat = executor.run_eager(task, seeds[0]);
    other = executor.run_eager(task, seeds[1]);
  } catch (const ExecutorError& e) {
    v.reject_reason = std::string("executor failure: ") + e.what();
    return v;
  }
  auto& c = v.criteria;
  c.runs_both_modes = true;

  c.deterministic = first.size() == repeat.size();
  for (std::size_t i = 0; c.deterministic && i < first.size(); ++i) {
    c.deterministic = first[i] == repeat[i];
  }

  bool all_close = first.size() == other.size();
  bool constant = false;
  for (std::size_t i = 0; i < first.size(); ++i) {
    constant = constant || is_constant(first[i], config.constant_span);
    if (i < other.size()) {
      constant = constant || is_constant(other[i], config.constant_span);
      all_close = all_close && first[i].shape() == other[i].shape() &&
                  allclose(first[i], other[i], config.atol, config.rtol);
    }
  }
  c.output_distinguishable = !all_close && !constant;

  c.workload_in_range = v.eager_ms >= config.min_eager_ms && v.eager_ms <= config.max_eager_ms;

  if (!c.deterministic) {
    v.reject_reason = "nondeterministic output";
  } else if (constant) {
    v.reject_reason = "constant output";
  } else if (all_close) {
    v.reject_reason = "output indistinguishable across inputs";
  } else if (v.eager_ms < config.min_eager_ms) {
    v.reject_reason = "workload below 1 ms";
  } else if (v.eager_ms > config.max_eager_ms) {
    v.reject_reason = "workload above 100 ms";
  }
  v.accepted = c.runs_both_modes && c.deterministic && c.output_distinguishable &&
               c.workload_in_range;
  return v;
}

json filter_verdict_to_json(const FilterVerdict& v) {
  return json{{"accepted", v.accepted},
              {"criteria",
               {{"runs_both_modes", v.criteria.runs_both_modes},
                {"deterministic", v.criteria.deterministic},
                {"output_distinguishable", v.criteria.output_distinguishable},
                {"workload_in_range", v.criteria.workload_in_range}}},
              {"eager_ms", v.eager_ms},
              {"reject_reason", v.reject_reason ? json(*v.reject_reason) : json(nullptr)}};
}

DecontaminationResult decontaminate(const std::vector<OperatorTask>& train,
                                    const std::vector<OperatorTask>& eval, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("decontamination threshold must be in (0, 1]");
  }
  DecontaminationResult r;
  for (const auto& t : train) {
    double best = 0.0;
    for (const auto& e : eval) best = std::max(best, structural_similarity(t.graph, e.graph));
    r.max_similarity.push_back(best);
    if (best > threshold) {
      r.removed.push_back(t);
    } else {
      r.kept.push_back(t);
      const int bin = std::min(kHistogramBins - 1, static_cast<int>(best * kHistogramBins));
      ++r.histogram[static_cast<std::size_t>(bin)];
    }
  }
  return r;
}

std::vector<CompositionRow> composition_report(const std::vector<Provenance>& provenances) {
  if (provenances.empty()) throw std::invalid_argument("composition report of an empty dataset");
  std::vector<CompositionRow> rows;
  for (int k = 1; k <= kMaxCompositeDepth; ++k) rows.push_back({"x" + std::to_string(k), 0, 0.0});
  rows.push_back({"transformer-like", 0, 0.0});
  for (const auto& p : provenances) {
    switch (p.kind) {
      case Provenance::Kind::kSeed:
        ++rows[0].count;
        break;
      case Provenance::Kind::kComposite:
        ++rows[static_cast<std::size_t>(std::clamp(p.k, 1, kMaxCompositeDepth) - 1)].count;
        break;
      case Provenance::Kind::kTransformerLike:
        ++rows.back().count;
        break;
    }
  }
  const auto total = static_cast<double>(provenances.size());
  for (auto& r : rows) r.percent = 100.0 * static_cast<double>(r.count) / total;
  return rows;
}

std::vector<CompositionRow> composition_report(const std::vector<OperatorTask>& tasks) {
  std::vector<Provenance> p;
  p.reserve(tasks.size());
  for (const auto& t : tasks) p.push_back(t.provenance);
  return composition_report(p);
}

std::string render_composition(const std::vector<CompositionRow>& rows) {
  std::ostringstream os;
  char line[96];
  std::snprintf(line, sizeof(line), "%-18s %8s %9s\n", "category", "count", "percent");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-18s %8lld %8.2f%%\n", r.category.c_str(),
                  static_cast<long long>(r.count), r.percent);
    os << line;
  }
  return os.str();
}

SynthResult run_synth_pipeline(const SeedCatalog& catalog, const SynthConfig& config,
                               Executor& executor, const std::vector<OperatorTask>& eval) {
  std::vector<double> weights(config.depth_weights.begin(), config.depth_weights.end());
  const auto composable = catalog.composable().size();
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (k + 1 > composable) weights[k] = 0.0;
  }
  weights.push_back(catalog.transformer_like().empty() ? 0.0 : config.transformer_weight);
  double total_weight = 0.0;
  for (double w : weights) total_weight += w;
  if (total_weight <= 0.0) throw SynthesisError("catalog cannot produce any task category");

  std::vector<OperatorTask> accepted;
  std::map<std::string, int> rejects;
  int attempted = 0;
  std::mt19937_64 rng(derive_seed(config.seed, 0x73796e7468ULL));
  const int max_attempts = config.count * config.max_attempts_per_task;
  while (static_cast<int>(accepted.size()) < config.count && attempted < max_attempts) {
    const auto task_seed = derive_seed(config.seed, static_cast<std::uint64_t>(attempted));
    ++attempted;
    double u = unit(rng) * total_weight;
    std::size_t cat = 0;
    while (cat + 1 < weights.size() && (u >= weights[cat] || weights[cat] == 0.0)) {
      u -= weights[cat];
      ++cat;
    }
    OperatorTask task;
    try {
      task = cat < config.depth_weights.size()
                 ? synthesize_composite(catalog, task_seed, static_cast<int>(cat) + 1)
                 : synthesize_transformer_like(catalog, task_seed);
    } catch (const SynthesisError&) {
      ++rejects["synthesis failed"];
      continue;
    }
    const auto verdict = filter_task(task, executor, config.executor, config.filter);
    if (!verdict.accepted) {
      ++rejects[verdict.reject_reason.value_or("rejected")];
      continue;
    }
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%05zu", accepted.size());
    task.task_id = id;
    accepted.push_back(std::move(task));
  }

  auto decon = decontaminate(accepted, eval, config.decontamination_threshold);
  SynthResult result;
  result.tasks = std::move(decon.kept);

  json counts = json::object();
  if (!result.tasks.empty()) {
    for (const auto& row : composition_report(result.tasks)) counts[row.category] = row.count;
  }
  json removed = json::array();
  for (const auto& t : decon.removed) removed.push_back(t.task_id);
  result.manifest = json{
      {"seed", config.seed},
      {"counts", counts},
      {"filter", {{"attempted", attempted}, {"accepted", accepted.size()}, {"rejects", rejects}}},
      {"decontamination",
       {{"threshold", config.decontamination_threshold},
        {"eval_tasks", eval.size()},
        {"removed", removed},
        {"histogram", decon.histogram}}}};
  return result;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<OperatorTask>& tasks,
                   const json& manifest) {
  std::filesystem::create_directories(dir);
  for (const auto& t : tasks) save_task(t, dir / (t.task_id + ".json"));
  write_text_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace kernelforge
