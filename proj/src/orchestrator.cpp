// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/orchestrator.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "kernelforge/digest.hpp"
#include "kernelforge/interpreter.hpp"
#include "kernelforge/protocol.hpp"
#include "kernelforge/task_io.hpp"

namespace kernelforge {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration.

EnvConfig RunConfig::env_config() const {
  EnvConfig e;
  e.mode = mode;
  e.budgets = budgets;
  e.observation_cap = observation_cap;
  e.executor = measurement;
  return e;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw DataError("config: " + key + " expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) {
    throw DataError("config: " + key + " expects a nonnegative integer, got '" + v + "'");
  }
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  const auto u = parse_u64(key, v);
  if (u > 1u << 30) throw DataError("config: " + key + " is out of range");
  return static_cast<int>(u);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config: " + key + " expects true or false, got '" + v + "'");
}

struct Key {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename Get, typename Set>
Key key(Get g, Set s) {
  return {g, s};
}

#define KF_DOUBLE(field)                                                      \
  key([](const RunConfig& c) { return fmt_double(c.field); },                 \
      [](RunConfig& c, const std::string& k, const std::string& v) {          \
        c.field = parse_double(k, v);                                         \
      })
#define KF_INT(field)                                                         \
  key([](const RunConfig& c) { return std::to_string(c.field); },             \
      [](RunConfig& c, const std::string& k, const std::string& v) {          \
        c.field = parse_int(k, v);                                            \
      })
#define KF_BOOL(field)                                                        \
  key([](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
      [](RunConfig& c, const std::string& k, const std::string& v) {          \
        c.field = parse_bool(k, v);                                           \
      })

const std::map<std::string, Key>& config_keys() {
  static const std::map<std::string, Key> keys = {
      {"executor", key([](const RunConfig& c) { return c.executor; },
                       [](RunConfig& c, const std::string& k, const std::string& v) {
                         if (v != "simulated" && v != "external") {
                           throw DataError("config: " + k + " must be simulated or external");
                         }
                         c.executor = v;
                       })},
      {"executor_endpoint", key([](const RunConfig& c) { return c.executor_endpoint; },
                                [](RunConfig& c, const std::string&, const std::string& v) {
                                  c.executor_endpoint = v;
                                })},
      {"mode", key([](const RunConfig& c) {
                     return std::string(c.mode == EpisodeMode::kTrain ? "train" : "eval");
                   },
                   [](RunConfig& c, const std::string& k, const std::string& v) {
                     if (v == "train") c.mode = EpisodeMode::kTrain;
                     else if (v == "eval") c.mode = EpisodeMode::kEval;
                     else throw DataError("config: " + k + " must be train or eval");
                   })},
      {"max_turns_train", KF_INT(budgets.max_turns_train)},
      {"max_turns_eval", KF_INT(budgets.max_turns_eval)},
      {"context_tokens", key([](const RunConfig& c) { return std::to_string(c.budgets.context_tokens); },
                             [](RunConfig& c, const std::string& k, const std::string& v) {
                               c.budgets.context_tokens = parse_u64(k, v);
                             })},
      {"observation_cap", key([](const RunConfig& c) { return std::to_string(c.observation_cap); },
                              [](RunConfig& c, const std::string& k, const std::string& v) {
                                c.observation_cap = parse_u64(k, v);
                              })},
      {"launch_overhead_us", KF_DOUBLE(cost.launch_overhead_us)},
      {"bytes_per_second", KF_DOUBLE(cost.bytes_per_second)},
      {"flops_per_second", KF_DOUBLE(cost.flops_per_second)},
      {"noise_relative_sigma", KF_DOUBLE(cost.noise_relative_sigma)},
      {"rng_seed", key([](const RunConfig& c) { return std::to_string(c.cost.rng_seed); },
                       [](RunConfig& c, const std::string& k, const std::string& v) {
                         c.cost.rng_seed = parse_u64(k, v);
                       })},
      {"atol", KF_DOUBLE(measurement.atol)},
      {"rtol", KF_DOUBLE(measurement.rtol)},
      {"warmup", KF_INT(measurement.warmup)},
      {"repeats", KF_INT(measurement.repeats)},
      {"reward_variant", key([](const RunConfig& c) { return std::string(to_string(c.reward_variant)); },
                             [](RunConfig& c, const std::string& k, const std::string& v) {
                               auto r = parse_reward_variant(v);
                               if (!r) throw DataError("config: " + k + " must be robust or speedup");
                               c.reward_variant = *r;
                             })},
      {"seed", key([](const RunConfig& c) { return std::to_string(c.seed); },
                   [](RunConfig& c, const std::string& k, const std::string& v) {
                     c.seed = parse_u64(k, v);
                   })},
      {"workers", KF_INT(workers)},
      {"out", key([](const RunConfig& c) { return c.out; },
                  [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; })},
      {"keep_workspaces", KF_BOOL(keep_workspaces)},
      {"gamma", KF_DOUBLE(gae.gamma)},
      {"lambda", KF_DOUBLE(gae.lambda)},
      {"eps_lower", KF_DOUBLE(clip.eps_lower)},
      {"eps_higher", KF_DOUBLE(clip.eps_higher)},
      {"normalize_advantages", KF_BOOL(normalize_advantages)},
      {"floor_logp", KF_DOUBLE(floor_logp)},
      {"redundant_loop_threshold", KF_INT(redundant_loop_threshold)},
      {"synth_count", KF_INT(synth.count)},
      {"synth_max_attempts_per_task", KF_INT(synth.max_attempts_per_task)},
      {"decontamination_threshold", KF_DOUBLE(synth.decontamination_threshold)},
      {"min_eager_ms", KF_DOUBLE(synth.filter.min_eager_ms)},
      {"max_eager_ms", KF_DOUBLE(synth.filter.max_eager_ms)},
  };
  return keys;
}

#undef KF_DOUBLE
#undef KF_INT
#undef KF_BOOL

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void check_config(const RunConfig& c) {
  if (c.workers < 1) throw DataError("config: workers must be >= 1");
  if (c.budgets.max_turns_eval < c.budgets.max_turns_train) {
    throw DataError("config: max_turns_eval must be >= max_turns_train");
  }
  if (c.budgets.max_turns_train < 1) throw DataError("config: max_turns_train must be >= 1");
  if (c.measurement.repeats < 1) throw DataError("config: repeats must be >= 1");
  if (!(c.gae.gamma >= 0 && c.gae.gamma <= 1 && c.gae.lambda >= 0 && c.gae.lambda <= 1)) {
    throw DataError("config: gamma and lambda must be in [0, 1]");
  }
  if (!(c.clip.eps_lower > 0 && c.clip.eps_lower < 1 && c.clip.eps_higher > 0 &&
        c.clip.eps_higher < 1)) {
    throw DataError("config: clip epsilons must be in (0, 1)");
  }
  if (!(c.synth.decontamination_threshold > 0 && c.synth.decontamination_threshold <= 1)) {
    throw DataError("config: decontamination_threshold must be in (0, 1]");
  }
  try {
    c.cost.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("config: ") + e.what());
  }
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& k, const std::string& value) {
  const auto& keys = config_keys();
  auto it = keys.find(k);
  if (it == keys.end()) throw DataError("config: unknown key '" + k + "'");
  it->second.set(cfg, k, value);
  if (k == "seed") cfg.synth.seed = cfg.seed;
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("config line " + std::to_string(n) + ": expected key = value");
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const DataError& e) {
      throw DataError("config line " + std::to_string(n) + ": " + e.what());
    }
  }
  check_config(base);
  return base;
}

RunConfig load_config(const fs::path& path, RunConfig base) {
  return parse_config(read_text_file(path), std::move(base));
}

std::string config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, entry] : config_keys()) out += k + " = " + entry.get(cfg) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Logs.

json episode_to_json(const EpisodeLog& log) {
  json turns = json::array();
  for (const auto& t : log.turns) {
    turns.push_back({{"turn_index", t.turn_index},
                     {"action", t.action},
                     {"observation_digest", t.observation_digest},
                     {"observation_bytes", t.observation_bytes},
                     {"error", t.error},
                     {"schema_violation", t.schema_violation}});
  }
  json measurements = json::array();
  for (const auto& m : log.measurements) measurements.push_back(report_to_json(m));
  return json{{"task_id", log.task_id},
              {"level", log.level ? json(std::string(to_string(*log.level))) : json(nullptr)},
              {"policy_id", log.policy_id},
              {"seed", log.seed},
              {"mode", log.mode},
              {"turns", turns},
              {"measurements", measurements},
              {"best_index", log.best_index ? json(*log.best_index) : json(nullptr)},
              {"reward_variant", std::string(to_string(log.reward_variant))},
              {"final_reward", log.final_reward},
              {"done_reason", log.done_reason},
              {"budgets_used", {{"turns", log.turns_used}, {"tokens", log.tokens_used}}}};
}

EpisodeLog episode_from_json(const json& j) {
  EpisodeLog log;
  try {
    log.task_id = j.at("task_id").get<std::string>();
    if (!j.at("level").is_null()) {
      log.level = parse_level_tag(j["level"].get<std::string>());
      if (!log.level) throw DataError("episode: unknown level");
    }
    log.policy_id = j.at("policy_id").get<std::string>();
    log.seed = j.at("seed").get<std::uint64_t>();
    log.mode = j.at("mode").get<std::string>();
    for (const auto& t : j.at("turns")) {
      TurnLog tl;
      tl.turn_index = t.at("turn_index").get<int>();
      tl.action = t.at("action");
      tl.observation_digest = t.at("observation_digest").get<std::string>();
      tl.observation_bytes = t.at("observation_bytes").get<std::size_t>();
      tl.error = t.value("error", false);
      tl.schema_violation = t.value("schema_violation", false);
      log.turns.push_back(std::move(tl));
    }
    for (const auto& m : j.at("measurements")) log.measurements.push_back(report_from_json(m));
    if (!j.at("best_index").is_null()) log.best_index = j["best_index"].get<std::size_t>();
    const auto variant = parse_reward_variant(j.at("reward_variant").get<std::string>());
    if (!variant) throw DataError("episode: unknown reward variant");
    log.reward_variant = *variant;
    log.final_reward = j.at("final_reward").get<double>();
    log.done_reason = j.at("done_reason").get<std::string>();
    log.turns_used = j.at("budgets_used").at("turns").get<int>();
    log.tokens_used = j.at("budgets_used").at("tokens").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(std::string("episode: ") + e.what());
  }
  return log;
}

std::string canonical_line(const EpisodeLog& log) { return episode_to_json(log).dump(); }

double recompute_reward(const EpisodeLog& log) {
  if (log.done_reason == to_string(DoneReason::kEnvError)) return -1.0;
  const auto best = best_of_trajectory(log.measurements);
  return trajectory_reward(log.reward_variant,
                           best ? std::optional<MeasurementReport>(log.measurements[*best])
                                : std::nullopt);
}

RftVerdict rft_filter_log(const EpisodeLog& log, int loop_threshold) {
  std::vector<RftTurn> turns;
  for (const auto& t : log.turns) {
    RftTurn r;
    const auto type = t.action.value("type", std::string());
    r.tool = type == "tool" ? t.action.value("tool", std::string()) : type;
    r.args = type == "tool" ? t.action.value("args", json::object()).dump()
                            : t.action.value("candidate", json::object()).dump();
    r.observation_digest = t.observation_digest;
    r.schema_violation = t.schema_violation;
    turns.push_back(std::move(r));
  }
  return rft_filter(turns, log.final_reward, loop_threshold);
}

TaskResult task_result(const EpisodeLog& log) {
  TaskResult r;
  r.task_id = log.task_id;
  r.level = log.level.value_or(LevelTag::kL1);
  const auto best = best_of_trajectory(log.measurements);
  if (best) {
    const auto& m = log.measurements[*best];
    r.passed = true;
    r.speedup_vs_eager = *m.eager_ms / *m.candidate_ms;
    r.speedup_vs_compile = *m.compile_ms / *m.candidate_ms;
  }
  return r;
}

EpisodeStore::EpisodeStore(fs::path file) : file_(std::move(file)) {
  if (file_.has_parent_path()) fs::create_directories(file_.parent_path());
}

void EpisodeStore::append(const EpisodeLog& log) { append_all({log}); }

void EpisodeStore::append_all(const std::vector<EpisodeLog>& logs) {
  std::string block;
  for (const auto& l : logs) block += canonical_line(l) + "\n";
  std::lock_guard lock(mu_);
  std::ofstream out(file_, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot open store " + file_.string());
  out.write(block.data(), static_cast<std::streamsize>(block.size()));
  out.flush();
  if (!out) throw DataError("write to store " + file_.string() + " failed");
}

std::vector<EpisodeLog> EpisodeStore::scan(const std::function<bool(const EpisodeLog&)>& keep,
                                           std::vector<std::string>* warnings) const {
  std::lock_guard lock(mu_);
  std::vector<EpisodeLog> out;
  if (!fs::exists(file_)) return out;
  const auto text = read_text_file(file_);
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) {
      const auto msg = file_.string() + ": ignoring incomplete trailing record at byte " +
                       std::to_string(pos);
      if (warnings) warnings->push_back(msg);
      std::cerr << "warning: " << msg << '\n';
      break;
    }
    const auto line = text.substr(pos, nl - pos);
    if (!line.empty()) {
      EpisodeLog log;
      try {
        log = episode_from_json(json::parse(line));
      } catch (const std::exception& e) {
        throw DataError(file_.string() + ": corrupt record at byte offset " + std::to_string(pos) +
                        ": " + e.what());
      }
      if (!keep || keep(log)) out.push_back(std::move(log));
    }
    pos = nl + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Episodes.

ExecutorFactory make_executor_factory(const RunConfig& cfg) {
  if (cfg.executor == "external") {
    std::string endpoint = cfg.executor_endpoint;
    if (endpoint.empty()) {
      if (const char* env = std::getenv("KERNELFORGE_EXECUTOR")) endpoint = env;
    }
    if (endpoint.empty()) {
      throw DataError("external executor needs executor_endpoint or KERNELFORGE_EXECUTOR");
    }
    return [endpoint](std::uint64_t) -> std::unique_ptr<Executor> {
      return std::make_unique<RemoteExecutor>(connect_tcp(endpoint));
    };
  }
  const auto params = cfg.cost;
  return [params](std::uint64_t seed) -> std::unique_ptr<Executor> {
    auto p = params;
    p.rng_seed = seed;
    return std::make_unique<SimulatedExecutor>(p);
  };
}

std::uint64_t episode_seed(const RunConfig& cfg, const std::string& task_id) {
  return derive_seed(cfg.seed, stable_hash64(task_id));
}

EpisodeLog run_episode(const OperatorTask& task, Policy& policy, const ExecutorFactory& executors,
                       const RunConfig& cfg, const fs::path& workspace_root) {
  EpisodeLog log;
  log.task_id = task.task_id;
  log.level = task.level_tag;
  log.policy_id = policy.id();
  log.seed = episode_seed(cfg, task.task_id);
  log.mode = cfg.mode == EpisodeMode::kTrain ? "train" : "eval";
  log.reward_variant = cfg.reward_variant;

  std::unique_ptr<Executor> executor;
  try {
    executor = executors(log.seed);
  } catch (const ExecutorError& e) {
    log.done_reason = std::string(to_string(DoneReason::kEnvError));
    log.final_reward = -1.0;
    return log;
  }
  const auto root = workspace_root / task.task_id;
  {
    SandboxEnv env(task, root, *executor, cfg.env_config());
    while (!env.state().done) env.step(policy.next(env.state()));
    const auto& st = env.state();
    for (const auto& t : st.history) {
      TurnLog tl;
      tl.turn_index = t.turn_index;
      tl.action = action_to_json(t.action);
      tl.observation_digest = sha256_hex(t.observation.text);
      tl.observation_bytes = t.observation.raw_bytes;
      tl.error = t.observation.error;
      tl.schema_violation = t.observation.schema_violation;
      log.turns.push_back(std::move(tl));
    }
    log.measurements = st.reports;
    log.best_index = st.best_report;
    log.done_reason = std::string(to_string(*st.done_reason));
    log.turns_used = st.turn;
    log.tokens_used = st.tokens_used;
  }
  log.final_reward = recompute_reward(log);
  if (!cfg.keep_workspaces) fs::remove_all(root);
  return log;
}

std::vector<EpisodeLog> run_episodes(const std::vector<OperatorTask>& tasks,
                                     const PolicyFactory& policies,
                                     const ExecutorFactory& executors, const RunConfig& cfg,
                                     const fs::path& workspace_root) {
  const auto workers = static_cast<std::size_t>(std::max(1, cfg.workers));
  std::vector<EpisodeLog> logs(tasks.size());
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (stable_hash64(tasks[i].task_id) % workers != w) continue;
        auto policy = policies();
        logs[i] = run_episode(tasks[i], *policy, executors, cfg, workspace_root);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return logs;
}

}  // namespace kernelforge
