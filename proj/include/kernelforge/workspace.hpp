// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kernelforge/graph.hpp"

namespace kernelforge {

/// Embedded copy of assets/SKILL.md.
std::string_view default_skill_asset();

enum class AccessMode { kRead, kWrite };

/// Permission entry. `prefix` is a root-relative path; a prefix ending in
/// '/' covers everything below that directory, otherwise it names one file.
struct PermissionRule {
  std::string prefix;
  bool writable = false;
  std::string reason;  // denial reason for writes
};

struct Workspace {
  std::filesystem::path root;  // canonical
  std::vector<PermissionRule> permissions;
};

/// Top-level entries of a fresh workspace.
inline constexpr std::string_view kWorkspaceLayout[] = {
    "binding_registry.h", "binding.cpp", "kernels/", "utils/",
    "model.py",           "model_new.py", "SKILL.md"};

/// Materializes the layout under `root` (created if missing; previous
/// contents are removed). Throws std::filesystem::filesystem_error.
Workspace init_workspace(const OperatorTask& task, std::string_view skill_asset,
                         const std::filesystem::path& root);

/// Python source of the reference model for a graph.
std::string render_model_py(const OperatorTask& task);

struct PermissionDecision {
  bool allowed = false;
  std::string reason;  // empty when allowed
  std::string relative;  // root-relative normalized path when inside root
};

/// Resolves `path` (absolute, or relative to root) and decides access.
/// Anything resolving outside the root is denied with reason "escape".
PermissionDecision check_permission(const Workspace& ws, std::string_view path, AccessMode mode);

/// SHA-256 over sorted relative paths and file contents.
std::string tree_digest(const std::filesystem::path& root);

/// Digest of the agent-written sources (kernels/** and model_new.py).
std::string source_digest(const Workspace& ws);

/// Root-relative paths of every regular file, sorted.
std::vector<std::string> list_files(const std::filesystem::path& root);

}  // namespace kernelforge
