// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kernelforge/task_io.hpp"

namespace kernelforge {

using nlohmann::json;

json result_to_json(const TaskResult& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"task_id", r.task_id},
              {"level", std::string(to_string(r.level))},
              {"passed", r.passed},
              {"speedup_vs_eager", opt(r.speedup_vs_eager)},
              {"speedup_vs_compile", opt(r.speedup_vs_compile)}};
}

TaskResult result_from_json(const json& j) {
  TaskResult r;
  try {
    r.task_id = j.at("task_id").get<std::string>();
    const auto level = parse_level_tag(j.at("level").get<std::string>());
    if (!level) throw DataError("task result " + r.task_id + ": unknown level");
    r.level = *level;
    r.passed = j.at("passed").get<bool>();
    auto opt = [&](const char* key) -> std::optional<double> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      return j[key].get<double>();
    };
    r.speedup_vs_eager = opt("speedup_vs_eager");
    r.speedup_vs_compile = opt("speedup_vs_compile");
  } catch (const json::exception& e) {
    throw DataError(std::string("task result: ") + e.what());
  }
  const bool has = r.speedup_vs_eager.has_value() && r.speedup_vs_compile.has_value();
  const bool none = !r.speedup_vs_eager && !r.speedup_vs_compile;
  if (r.passed ? !has : !none) {
    throw DataError("task result " + r.task_id + ": speedups must be present iff passed");
  }
  if (has && !(*r.speedup_vs_eager > 0.0 && *r.speedup_vs_compile > 0.0)) {
    throw DataError("task result " + r.task_id + ": speedups must be positive");
  }
  return r;
}

std::vector<TaskResult> load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<TaskResult> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(result_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

void save_results(const std::filesystem::path& path, const std::vector<TaskResult>& results) {
  std::string text;
  for (const auto& r : results) text += result_to_json(r).dump() + "\n";
  write_text_file_atomic(path, text);
}

std::optional<double> geomean(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double acc = 0.0;
  for (double x : xs) {
    if (!(x > 0.0)) throw std::invalid_argument("geomean of a nonpositive value");
    acc += std::log(x);
  }
  return std::exp(acc / static_cast<double>(xs.size()));
}

LevelReport level_report(const std::vector<TaskResult>& results, const std::string& label) {
  LevelReport r;
  r.label = label;
  r.n_tasks = static_cast<int>(results.size());
  if (results.empty()) return r;
  int passed = 0, faster_eager = 0, faster_compile = 0;
  std::vector<double> se, sc;
  for (const auto& t : results) {
    if (!t.passed) continue;
    ++passed;
    se.push_back(*t.speedup_vs_eager);
    sc.push_back(*t.speedup_vs_compile);
    faster_eager += *t.speedup_vs_eager > 1.0;
    faster_compile += *t.speedup_vs_compile > 1.0;
  }
  const double n = r.n_tasks;
  r.pass_rate = 100.0 * passed / n;
  r.faster_rate_eager = 100.0 * faster_eager / n;
  r.faster_rate_compile = 100.0 * faster_compile / n;
  r.geomean_eager = geomean(se);
  r.geomean_compile = geomean(sc);
  return r;
}

LevelReport aggregate_overall(const std::map<LevelTag, LevelReport>& levels,
                              const std::map<LevelTag, double>& weights) {
  LevelReport o;
  o.label = "Overall";
  double w_rates = 0.0, w_eager = 0.0, w_compile = 0.0;
  double log_eager = 0.0, log_compile = 0.0;
  for (const auto& [level, rep] : levels) {
    if (rep.n_tasks == 0) continue;
    auto it = weights.find(level);
    const double w = it == weights.end() ? static_cast<double>(rep.n_tasks) : it->second;
    if (!(w > 0.0)) throw std::invalid_argument("level weights must be positive");
    o.n_tasks += rep.n_tasks;
    w_rates += w;
    o.pass_rate += w * rep.pass_rate;
    o.faster_rate_eager += w * rep.faster_rate_eager;
    o.faster_rate_compile += w * rep.faster_rate_compile;
    if (rep.geomean_eager) {
      w_eager += w;
      log_eager += w * std::log(*rep.geomean_eager);
    }
    if (rep.geomean_compile) {
      w_compile += w;
      log_compile += w * std::log(*rep.geomean_compile);
    }
  }
  if (w_rates > 0.0) {
    o.pass_rate /= w_rates;
    o.faster_rate_eager /= w_rates;
    o.faster_rate_compile /= w_rates;
  }
  if (w_eager > 0.0) o.geomean_eager = std::exp(log_eager / w_eager);
  if (w_compile > 0.0) o.geomean_compile = std::exp(log_compile / w_compile);
  return o;
}

EvalReport evaluate_results(const std::vector<TaskResult>& results,
                            const std::map<LevelTag, double>& weights) {
  std::map<LevelTag, std::vector<TaskResult>> by_level;
  for (const auto& r : results) by_level[r.level].push_back(r);
  std::map<LevelTag, LevelReport> levels;
  EvalReport report;
  for (const auto& [level, rs] : by_level) {
    levels[level] = level_report(rs, std::string(to_string(level)));
    report.rows.push_back(levels[level]);
  }
  if (!levels.empty()) report.rows.push_back(aggregate_overall(levels, weights));
  return report;
}

double round_half_up(double x, int digits) {
  const double scale = std::pow(10.0, digits);
  const double v = x * scale;
  return std::floor(v + 0.5 + 1e-9 * std::max(1.0, std::fabs(v))) / scale;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f%%", round_half_up(v, 1));
  return buf;
}

std::string times(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2fx", round_half_up(*v, 2));
  return buf;
}

}  // namespace

std::string render_report(const EvalReport& report) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-8s %6s %10s %16s %18s %16s %18s\n", "Level", "Tasks",
                "Pass Rate", "Faster vs Eager", "Faster vs Compile", "Speed-up Eager",
                "Speed-up Compile");
  os << line;
  if (report.rows.empty()) {
    os << "(no results)\n";
    return os.str();
  }
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof(line), "%-8s %6d %10s %16s %18s %16s %18s\n", r.label.c_str(),
                  r.n_tasks, pct(r.pass_rate).c_str(), pct(r.faster_rate_eager).c_str(),
                  pct(r.faster_rate_compile).c_str(), times(r.geomean_eager).c_str(),
                  times(r.geomean_compile).c_str());
    os << line;
  }
  return os.str();
}

json eval_report_to_json(const EvalReport& report) {
  json rows = json::array();
  auto opt = [](const std::optional<double>& v) {
    return v ? json(round_half_up(*v, 2)) : json(nullptr);
  };
  for (const auto& r : report.rows) {
    rows.push_back({{"level", r.label},
                    {"n_tasks", r.n_tasks},
                    {"pass_rate", round_half_up(r.pass_rate, 1)},
                    {"faster_rate_eager", round_half_up(r.faster_rate_eager, 1)},
                    {"faster_rate_compile", round_half_up(r.faster_rate_compile, 1)},
                    {"geomean_eager", opt(r.geomean_eager)},
                    {"geomean_compile", opt(r.geomean_compile)}});
  }
  return json{{"rows", rows}, {"empty", report.rows.empty()}};
}

}  // namespace kernelforge
