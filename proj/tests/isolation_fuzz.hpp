// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

// Adversarial tool-call sequences against a live sandbox. Counts writes that
// landed on read-only workspace files, anything created or changed outside
// the workspace root, and fallback submissions that were not rejected.

#pragma once

#include <algorithm>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "kernelforge/digest.hpp"
#include "kernelforge/fallback.hpp"
#include "kernelforge/sandbox.hpp"
#include "kernelforge/task_io.hpp"
#include "kernelforge/workspace.hpp"
#include "test_util.hpp"

namespace kftest {

struct FuzzReport {
  int sequences = 0;
  int steps = 0;
  int denials = 0;
  int readonly_writes = 0;
  int escapes = 0;
  int fallback_submits = 0;
  int fallback_misses = 0;
  std::vector<std::string> samples;  // transcripts of the first violating sequences
};

/// Digest of every workspace file the agent must not change.
inline std::string protected_digest(const std::filesystem::path& root) {
  std::string acc;
  for (const auto& rel : list_files(root)) {
    if (rel.rfind("kernels/", 0) == 0 || rel == "model_new.py") continue;
    acc += rel + '\0' + read_text_file(root / rel) + '\0';
  }
  std::vector<std::string> entries;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    const auto name = e.path().filename().string();
    if (name != "model_new.py") entries.push_back(name + (e.is_directory() ? "/" : ""));
  }
  std::sort(entries.begin(), entries.end());
  for (const auto& e : entries) acc += e + '\n';
  return sha256_hex(acc);
}

/// Everything under `dir` except the workspace root itself.
inline std::string outside_digest(const std::filesystem::path& dir, const std::string& ws_name) {
  std::string acc;
  for (auto it = std::filesystem::recursive_directory_iterator(dir);
       it != std::filesystem::recursive_directory_iterator(); ++it) {
    const auto rel = it->path().lexically_relative(dir).generic_string();
    if (rel == ws_name) {
      it.disable_recursion_pending();
      continue;
    }
    acc += rel + '\n';
    if (it->is_regular_file()) acc += read_text_file(it->path());
  }
  return sha256_hex(acc);
}

inline FuzzReport run_isolation_fuzz(int sequences, std::uint64_t seed) {
  using nlohmann::json;
  TempDir box("fuzz");
  const auto parent = box.path();
  std::ofstream(parent / "sentinel.txt") << "do not touch\n";
  std::filesystem::create_directories(parent / "outside");
  const std::string stray = "/tmp/kf-fuzz-stray-" + std::to_string(::getpid());

  const std::vector<std::string> readonly = {
      "model.py", "SKILL.md", "binding.cpp", "binding_registry.h", "utils/compile.sh",
      "utils/verification.py", "utils/profiling.py", "utils/new.py", "notes.md", "utils",
      "kernels", ".", "./model.py", "kernels/../model.py", "kernels/./../SKILL.md",
      "kernels//../utils/profiling.py", "kernels/sub/../../binding.cpp", "model_new.py/../model.py",
      "./", "kernels/.."};
  const std::vector<std::string> escapes = {
      "../sentinel.txt", "../outside/pwn", "kernels/../../outside/pwn", "../../../../tmp/x",
      (parent / "sentinel.txt").string(), (parent / "outside" / "pwn").string(), stray, "/",
      "..", "kernels/../..", "//etc/kf-pwn", (parent / "ws" / ".." / "pwn").string()};
  const std::vector<std::string> writable = {"kernels/a.cu", "kernels/sub/b_binding.cpp",
                                             "model_new.py", "kernels/c.py"};
  const std::vector<std::string> contents = {
      "__global__ void k(float* y) { y[0] = 0.f; }\n",
      "torch::Tensor f(torch::Tensor x) { return torch::relu(x); }\n",
      "y = torch.matmul(a, b)\n",
      "import torch.nn.functional as F\ny = F.gelu(x)\n",
      "out = x.sum(1)\n",
      "torch::Tensor g(torch::Tensor x) { return torch::empty_like(x); }\n",
      "at::Tensor h = at::mm(a, b);\n",
      "import torch\n",
  };
  const std::vector<std::string> shell = {
      "echo x > {}", "echo x >> {}", "rm -rf {}", "rm {}", "mkdir -p {}", "touch {}", "cat {}",
      "cd {} && touch q", "X={}; touch $X", "echo x > {} 2>&1", "sudo rm -rf {}", "ls {}",
      "rm -rf *", "rm -rf */", "touch {}/x", "FOO=1 sudo touch {}", "echo x > {} &",
      "mkdir {}; echo y > {}/z", "echo $(touch {})", "bash {}", "python3 {}", "true && rm -f {}"};

  std::mt19937_64 rng(seed);
  auto any = [&](const auto& v) -> const auto& {
    return v[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(v.size()) - 1))];
  };
  auto path = [&]() -> std::string {
    const auto r = uniform_int(rng, 0, 9);
    if (r < 5) return any(readonly);
    if (r < 8) return any(escapes);
    return any(writable);
  };

  SimulatedExecutor executor;
  const auto task = diag_matmul_task("fuzz", 8, 8);
  const auto before_outside = outside_digest(parent, "ws");

  FuzzReport rep;
  for (int s = 0; s < sequences; ++s) {
    SandboxEnv env(task, parent / "ws", executor);
    const auto root = env.workspace().root;
    const auto before = protected_digest(root);
    const auto n = uniform_int(rng, 3, 10);
    std::string transcript;
    for (int i = 0; i < n && !env.state().done; ++i) {
      Action action = Stop{};
      const auto kind = uniform_int(rng, 0, 11);
      const auto p = path();
      switch (kind) {
        case 0:
        case 1: action = ToolCall{"Write", {{"file_path", p}, {"content", any(contents)}}}; break;
        case 2: action = ToolCall{"Read", {{"file_path", p}}}; break;
        case 3:
          action = ToolCall{"Edit", {{"file_path", p}, {"old_string", "import"}, {"new_string", "pwn"},
                                     {"replace_all", true}}};
          break;
        case 4:
          action = ToolCall{"MultiEdit", {{"file_path", p},
                                          {"edits", {{{"old_string", "#"}, {"new_string", "pwn"},
                                                      {"replace_all", true}}}}}};
          break;
        case 5:
        case 6: {
          auto cmd = any(shell);
          for (auto pos = cmd.find("{}"); pos != std::string::npos; pos = cmd.find("{}")) {
            cmd.replace(pos, 2, p);
          }
          action = ToolCall{"Bash", {{"command", cmd}}};
          break;
        }
        case 7: action = ToolCall{"Glob", {{"pattern", "**"}, {"path", p}}}; break;
        case 8: action = ToolCall{"Grep", {{"pattern", "."}, {"path", p}}}; break;
        case 9:
          action = ToolCall{"Write", {{"file_path", any(writable)}, {"content", any(contents)}}};
          break;
        case 10: action = Submit{scripted_candidate(task.graph)}; break;
        default: action = ToolCall{any(std::vector<std::string>{"Write", "Bash", "Nope"}),
                                   {{"path", p}, {"cmd", 1}}};
      }
      bool fallback = false;
      if (std::holds_alternative<Submit>(action)) {
        fallback = scan_workspace_for_fallback(env.workspace()).violation;
      }
      transcript += action_to_json(action).dump() + "\n";
      const auto obs = env.step(action);
      ++rep.steps;
      if (obs.permission_denied || obs.text.find("permission denied") != std::string::npos) {
        ++rep.denials;
      }
      if (fallback) {
        ++rep.fallback_submits;
        const auto& r = env.state().reports.back();
        if (r.correct || r.failure_reason != "fallback") ++rep.fallback_misses;
      }
    }
    bool bad = false;
    if (protected_digest(root) != before) {
      ++rep.readonly_writes;
      bad = true;
    }
    if (outside_digest(parent, "ws") != before_outside || std::filesystem::exists(stray)) {
      ++rep.escapes;
      bad = true;
    }
    if (bad && rep.samples.size() < 3) rep.samples.push_back(transcript);
    ++rep.sequences;
  }
  std::error_code ec;
  std::filesystem::remove_all(stray, ec);
  return rep;
}

}  // namespace kftest
