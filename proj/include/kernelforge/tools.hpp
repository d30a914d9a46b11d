// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kernelforge/workspace.hpp"

namespace kernelforge {

// Agent tool registry. No tool reaches the network.
//
//   Bash        {command, run_in_background?, timeout?}
//   Read        {file_path, offset?, limit?}
//   Write       {file_path, content}
//   Edit        {file_path, old_string, new_string, replace_all?}
//   MultiEdit   {file_path, edits: [{old_string, new_string, replace_all?}]}
//   Glob        {pattern, path?}
//   Grep        {pattern, path?, glob?, output_mode?: content|files_with_matches, -i?}
//   BashOutput  {bash_id}
//   KillBash    {shell_id}
inline constexpr std::string_view kToolNames[] = {"Bash", "Read",       "Write",
                                                  "Edit", "MultiEdit",  "Glob",
                                                  "Grep", "BashOutput", "KillBash"};

bool is_known_tool(std::string_view name);

struct ToolCall {
  std::string tool;
  nlohmann::json args = nlohmann::json::object();

  friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

inline constexpr std::size_t kDefaultObservationCap = 32 * 1024;

struct Observation {
  std::string text;
  bool error = false;
  bool schema_violation = false;
  bool permission_denied = false;
  bool truncated = false;
  std::size_t raw_bytes = 0;  // before truncation
};

/// Byte-based token estimate: ceil(bytes / 4).
std::size_t estimate_tokens(std::size_t bytes);

/// Keeps the first `cap` bytes and appends a marker naming the dropped count.
Observation truncate_observation(Observation obs, std::size_t cap);

/// Why `call` is schema-invalid, or nullopt.
std::optional<std::string> schema_error(const ToolCall& call);

/// Handlers for the workspace utilities reachable from Bash:
/// `bash utils/compile.sh`, `python3 -m utils.verification`,
/// `python3 -m utils.profiling` (each optionally behind sudo).
struct UtilityHooks {
  std::function<std::string()> compile;
  std::function<std::string()> verification;
  std::function<std::string()> profiling;
};

/// Glob over '/'-separated relative paths; "**" spans any number of
/// segments, other segments use fnmatch syntax.
bool glob_match(std::string_view pattern, std::string_view path);

/// Per-episode tool state: the read set, the jailed shell session and its
/// background jobs. Single-threaded.
class ToolSession {
 public:
  ToolSession(Workspace ws, UtilityHooks hooks = {},
              std::size_t observation_cap = kDefaultObservationCap);

  /// Schema check, dispatch, truncation. Never throws for agent errors.
  Observation dispatch(const ToolCall& call);

  const Workspace& workspace() const { return ws_; }
  const std::set<std::string>& read_set() const { return read_; }

 private:
  struct ShellResult {
    std::string out;
    int status = 0;
    bool denied = false;
  };
  struct Job {
    std::string output;
    std::size_t delivered = 0;
    std::string status;  // completed | killed
    int exit_code = 0;
  };

  Observation read(const nlohmann::json& a);
  Observation write(const nlohmann::json& a);
  Observation edit(const nlohmann::json& a, bool multi);
  Observation glob(const nlohmann::json& a);
  Observation grep(const nlohmann::json& a);
  Observation bash(const nlohmann::json& a);
  Observation bash_output(const nlohmann::json& a);
  Observation kill_bash(const nlohmann::json& a);

  ShellResult run_shell(const std::string& command);
  ShellResult run_simple(std::vector<std::string> words, bool has_redirect,
                         const std::string& redirect_target, bool append);
  std::vector<std::string> expand_glob_word(const std::string& word) const;

  Workspace ws_;
  UtilityHooks hooks_;
  std::size_t cap_;
  std::set<std::string> read_;
  std::map<std::string, std::string> env_;
  std::map<std::string, Job> jobs_;
  int next_job_ = 1;
};

}  // namespace kernelforge
