// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

// kforge: command-line front end for synthesis, episodes, scoring,
// evaluation and trajectory math.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "kernelforge/metrics.hpp"
#include "kernelforge/orchestrator.hpp"
#include "kernelforge/protocol.hpp"
#include "kernelforge/rl.hpp"
#include "kernelforge/sandbox.hpp"
#include "kernelforge/synth.hpp"
#include "kernelforge/task_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kernelforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitExecutor = 3;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  std::optional<std::string> endpoint;
  std::vector<std::string> overrides;
  bool print_config = false;
};

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = load_config(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw DataError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) set_config_value(cfg, "seed", std::to_string(*g.seed));
  if (g.workers) {
    if (*g.workers < 1) throw DataError("--workers must be >= 1");
    cfg.workers = *g.workers;
  }
  if (g.out) cfg.out = *g.out;
  if (g.endpoint) {
    cfg.executor = "external";
    cfg.executor_endpoint = *g.endpoint;
  }
  cfg.synth.executor = cfg.measurement;
  return cfg;
}

std::unique_ptr<Executor> make_executor(const RunConfig& cfg) {
  if (cfg.executor == "external") return make_executor_factory(cfg)(cfg.cost.rng_seed);
  return std::make_unique<SimulatedExecutor>(cfg.cost);
}

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::vector<EpisodeLog> read_logs(const std::string& path) {
  if (!fs::exists(path)) throw DataError("no such log file: " + path);
  return EpisodeStore(path).scan();
}

// -- commands ---------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, const std::string& catalog_path, std::optional<int> count,
              const std::string& eval_dir) {
  const auto catalog = ingest_seed_catalog(catalog_path);
  auto sc = cfg.synth;
  if (count) sc.count = *count;
  std::vector<OperatorTask> eval;
  if (!eval_dir.empty()) eval = load_task_dir(eval_dir);
  auto executor = make_executor(cfg);
  const auto result = run_synth_pipeline(catalog, sc, *executor, eval);
  const auto dir = fs::path(cfg.out) / "dataset";
  write_dataset(dir, result.tasks, result.manifest);
  std::cout << render_composition(composition_report(result.tasks));
  std::cout << "wrote " << result.tasks.size() << " tasks to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_filter(const RunConfig& cfg, const std::string& tasks_dir) {
  const auto tasks = load_task_dir(tasks_dir);
  auto executor = make_executor(cfg);
  int accepted = 0;
  for (const auto& t : tasks) {
    const auto v = filter_task(t, *executor, cfg.measurement, cfg.synth.filter);
    accepted += v.accepted ? 1 : 0;
    std::cout << json{{"task_id", t.task_id}, {"verdict", filter_verdict_to_json(v)}}.dump()
              << "\n";
  }
  std::cerr << accepted << " of " << tasks.size() << " tasks accepted\n";
  return kExitOk;
}

int cmd_decontaminate(const RunConfig& cfg, const std::string& train_dir,
                      const std::string& eval_dir, std::optional<double> threshold) {
  const double th = threshold.value_or(cfg.synth.decontamination_threshold);
  const auto res = decontaminate(load_task_dir(train_dir), load_task_dir(eval_dir), th);
  json removed = json::array();
  for (const auto& t : res.removed) removed.push_back(t.task_id);
  const json summary{{"threshold", th},
                     {"kept", res.kept.size()},
                     {"removed", removed},
                     {"histogram", res.histogram}};
  const auto dir = fs::path(cfg.out) / "decontaminated";
  write_dataset(dir, res.kept, json{{"decontamination", summary}});
  std::cout << summary.dump() << "\n";
  return kExitOk;
}

int cmd_run(const RunConfig& cfg, const std::string& tasks_dir, const std::string& policy_name) {
  PolicyFactory policies;
  if (policy_name == "scripted") {
    policies = [] { return std::make_unique<ScriptedPolicy>(); };
  } else if (policy_name == "stop") {
    policies = [] { return std::make_unique<StopPolicy>(); };
  } else {
    throw CLI::ValidationError("--policy", "must be scripted or stop");
  }
  const auto tasks = load_task_dir(tasks_dir);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  const auto logs = run_episodes(tasks, policies, make_executor_factory(cfg), cfg,
                                 out / "workspaces");
  if (!cfg.keep_workspaces) fs::remove_all(out / "workspaces");

  const auto log_path = out / "episodes.jsonl";
  fs::remove(log_path);
  EpisodeStore(log_path).append_all(logs);
  std::vector<TaskResult> results;
  for (const auto& l : logs) results.push_back(task_result(l));
  save_results(out / "results.jsonl", results);

  for (const auto& l : logs) {
    std::cout << l.task_id << "\treward=" << fmt_num(l.final_reward) << "\tturns=" << l.turns_used
              << "\t" << l.done_reason << "\n";
  }
  std::cout << "wrote " << logs.size() << " episodes to " << log_path.string() << "\n";
  return kExitOk;
}

int cmd_score(const std::string& logs_path) {
  bool consistent = true;
  for (const auto& l : read_logs(logs_path)) {
    const double r = recompute_reward(l);
    const bool ok = r == l.final_reward;
    consistent = consistent && ok;
    std::cout << l.task_id << "\tfinal_reward=" << fmt_num(l.final_reward)
              << "\trecomputed=" << fmt_num(r) << "\t" << (ok ? "ok" : "MISMATCH") << "\n";
  }
  if (!consistent) {
    std::cerr << "error: stored rewards disagree with recomputation\n";
    return kExitData;
  }
  return kExitOk;
}

int cmd_eval(const std::string& path, bool from_logs, bool as_json) {
  std::vector<TaskResult> results;
  if (from_logs) {
    for (const auto& l : read_logs(path)) results.push_back(task_result(l));
  } else {
    results = load_results(path);
  }
  const auto report = evaluate_results(results);
  if (as_json) {
    std::cout << eval_report_to_json(report).dump(2) << "\n";
  } else {
    std::cout << render_report(report);
  }
  return kExitOk;
}

json seq_json(const Seq<double>& s) { return std::vector<double>(s.begin(), s.end()); }

int cmd_rl(const RunConfig& cfg, const std::string& what, const std::string& path) {
  if (what == "rft-filter") {
    const auto logs = read_logs(path);
    std::vector<EpisodeLog> kept;
    for (const auto& l : logs) {
      const auto v = rft_filter_log(l, cfg.redundant_loop_threshold);
      std::cout << json{{"task_id", l.task_id}, {"kept", v.kept}, {"reasons", v.reasons}}.dump()
                << "\n";
      if (v.kept) kept.push_back(l);
    }
    const auto kept_path = fs::path(cfg.out) / "rft_kept.jsonl";
    fs::create_directories(cfg.out);
    fs::remove(kept_path);
    EpisodeStore(kept_path).append_all(kept);
    std::cerr << "kept " << kept.size() << " of " << logs.size() << " episodes\n";
    return kExitOk;
  }
  const auto batch = load_trajectories(path);
  if (what == "gae") {
    for (const auto& t : batch) {
      const auto r = gae(t.rewards, t.values, cfg.gae);
      std::cout << json{{"advantages", seq_json(r.advantages)}, {"targets", seq_json(r.targets)}}
                       .dump()
                << "\n";
    }
  } else if (what == "ppo") {
    json diag = json::array();
    for (const auto& t : batch) {
      const auto s = ratio_diagnostics(t.logp_old, t.logp_new, cfg.floor_logp);
      diag.push_back({{"n_floor_tokens", s.n_floor_tokens},
                      {"max_ratio", s.max_ratio},
                      {"ratio_variance", s.ratio_variance},
                      {"flagged", s.flagged}});
    }
    std::cout << json{{"objective",
                       ppo_batch_objective(batch, cfg.gae, cfg.clip, cfg.normalize_advantages)},
                      {"diagnostics", diag}}
                     .dump()
              << "\n";
  } else if (what == "value-loss") {
    std::cout << json{{"value_loss", value_loss_batch(batch, cfg.gae)}}.dump() << "\n";
  } else if (what == "rft-loss") {
    std::cout << json{{"rft_loss", rft_loss_batch(batch)}}.dump() << "\n";
  }
  return kExitOk;
}

int cmd_serve(const RunConfig& cfg, const std::string& host, std::uint16_t port,
              std::optional<int> max_connections) {
  const auto params = cfg.cost;
  serve_tcp(
      host, port, [params] { return std::make_unique<SimulatedExecutor>(params); },
      max_connections, [&host](std::uint16_t bound) {
        std::cout << "listening on " << host << ":" << bound << std::endl;
      });
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kforge: operator-task synthesis, agent episodes and evaluation"};
  app.fallthrough();
  app.require_subcommand(0, 1);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--workers", g.workers, "parallel episode workers");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--executor-endpoint", g.endpoint,
                 "host:port of an external executor (else KERNELFORGE_EXECUTOR)");
  app.add_option("--set", g.overrides, "override a config key (key=value)");
  app.add_flag("--print-config", g.print_config, "print the resolved configuration and exit");

  auto* synth = app.add_subcommand("synth", "synthesize, filter and decontaminate a dataset");
  std::string catalog_path, eval_dir;
  std::optional<int> count;
  synth->add_option("--catalog", catalog_path, "seed catalog JSON")
      ->required()
      ->check(CLI::ExistingFile);
  synth->add_option("--count", count, "number of tasks to accept");
  synth->add_option("--eval", eval_dir, "evaluation task directory for decontamination")
      ->check(CLI::ExistingDirectory);

  auto* filter = app.add_subcommand("filter", "apply the four filtering criteria");
  std::string filter_dir;
  filter->add_option("tasks", filter_dir, "task directory")->required()->check(CLI::ExistingDirectory);

  auto* decon = app.add_subcommand("decontaminate", "drop training tasks similar to eval tasks");
  std::string train_dir, decon_eval_dir;
  std::optional<double> threshold;
  decon->add_option("--train", train_dir)->required()->check(CLI::ExistingDirectory);
  decon->add_option("--eval", decon_eval_dir)->required()->check(CLI::ExistingDirectory);
  decon->add_option("--threshold", threshold, "similarity threshold (strictly greater removes)");

  auto* run = app.add_subcommand("run", "run agent episodes over a task directory");
  std::string run_dir, policy_name = "scripted";
  run->add_option("tasks", run_dir, "task directory")->required()->check(CLI::ExistingDirectory);
  run->add_option("--policy", policy_name, "scripted | stop")
      ->check(CLI::IsMember({"scripted", "stop"}));

  auto* score = app.add_subcommand("score", "recompute rewards from episode logs");
  std::string score_path;
  score->add_option("logs", score_path, "episode log (JSONL)")->required();

  auto* eval = app.add_subcommand("eval", "per-level and overall metrics");
  std::string eval_path;
  bool from_logs = false, as_json = false;
  eval->add_option("results", eval_path, "task results (JSONL)")->required();
  eval->add_flag("--logs", from_logs, "input is an episode log");
  eval->add_flag("--json", as_json, "emit JSON");

  auto* rl = app.add_subcommand("rl", "trajectory math");
  rl->require_subcommand(1);
  std::string rl_path, rl_what;
  for (const char* name : {"gae", "ppo", "value-loss", "rft-filter", "rft-loss"}) {
    auto* sub = rl->add_subcommand(name);
    sub->add_option("file", rl_path,
                    std::string(name) == "rft-filter" ? "episode log (JSONL)" : "trajectory file")
        ->required();
    sub->callback([&rl_what, name] { rl_what = name; });
  }

  auto* serve = app.add_subcommand("serve-executor", "serve the simulated executor over TCP");
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::optional<int> max_connections;
  serve->add_option("--host", host);
  serve->add_option("--port", port, "0 picks a free port");
  serve->add_option("--max-connections", max_connections);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    const auto cfg = resolve_config(g);
    if (g.print_config) {
      std::cout << config_to_text(cfg);
      return kExitOk;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return kExitUsage;
    }
    if (*synth) return cmd_synth(cfg, catalog_path, count, eval_dir);
    if (*filter) return cmd_filter(cfg, filter_dir);
    if (*decon) return cmd_decontaminate(cfg, train_dir, decon_eval_dir, threshold);
    if (*run) return cmd_run(cfg, run_dir, policy_name);
    if (*score) return cmd_score(score_path);
    if (*eval) return cmd_eval(eval_path, from_logs, as_json);
    if (*rl) return cmd_rl(cfg, rl_what, rl_path);
    if (*serve) return cmd_serve(cfg, host, port, max_connections);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ExecutorError& e) {
    std::cerr << "executor error: " << e.what() << "\n";
    return kExitExecutor;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::domain_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
