// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/workspace.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "kernelforge/digest.hpp"
#include "kernelforge/task_io.hpp"

namespace kernelforge {

namespace fs = std::filesystem;

namespace {

constexpr const char* kBindingRegistry = R"(#pragma once
// Registration system for extension ops. Do not modify.
#include <torch/csrc/utils/pybind.h>

#include <functional>
#include <string>
#include <vector>

using BindingFn = std::function<void(pybind11::module&)>;

inline std::vector<std::pair<std::string, BindingFn>>& binding_registry() {
  static std::vector<std::pair<std::string, BindingFn>> entries;
  return entries;
}

struct BindingRegistrar {
  BindingRegistrar(const char* name, BindingFn fn) {
    binding_registry().emplace_back(name, std::move(fn));
  }
};

#define REGISTER_BINDING(name, fn) static BindingRegistrar registrar_##name(#name, fn)
)";

constexpr const char* kBindingCpp = R"(// Extension module entry point. Do not modify.
#include <torch/csrc/utils/pybind.h>

#include "binding_registry.h"

PYBIND11_MODULE(cuda_extension, m) {
  for (auto& [name, fn] : binding_registry()) fn(m);
}
)";

constexpr const char* kCompileSh = R"(#!/bin/bash
# Builds kernels/*.cu and kernels/*_binding.cpp into the cuda_extension module.
set -euo pipefail
cd "$(dirname "$0")/.."
python3 -m utils.build_extension --sources kernels binding.cpp
)";

constexpr const char* kVerificationPy = R"("""Checks ModelNew against Model on five random inputs (atol = rtol = 1e-2)."""

ATOL = 1e-2
RTOL = 1e-2
NUM_INPUTS = 5


def main():
    raise SystemExit("run inside the sandbox: sudo python3 -m utils.verification")


if __name__ == "__main__":
    main()
)";

constexpr const char* kProfilingPy = R"("""Times Model (eager and compiled) and ModelNew after warm-up iterations."""

WARMUP = 5
REPEATS = 20


def main():
    raise SystemExit("run inside the sandbox: sudo python3 -m utils.profiling")


if __name__ == "__main__":
    main()
)";

constexpr const char* kModelNewPy = R"(import torch
import torch.nn as nn
import cuda_extension


class ModelNew(nn.Module):
    def __init__(self):
        super().__init__()

    def forward(self, *inputs):
        # Call kernels from cuda_extension here.
        raise NotImplementedError
)";

std::string var_name(const std::string& id) {
  if (auto i = parse_input_ref(id)) return "x" + std::to_string(*i);
  std::string s = "v_";
  for (char c : id) s.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return s;
}

std::string py_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  auto s = os.str();
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string py_expr(const OperatorNode& n) {
  std::vector<std::string> a;
  for (const auto& r : n.inputs) a.push_back(var_name(r));
  const auto& p = n.params;
  switch (n.kind) {
    case NodeKind::kElementwise:
      switch (p.elementwise) {
        case ElementwiseOp::kAdd: return a[0] + " + " + a[1];
        case ElementwiseOp::kMul: return a[0] + " * " + a[1];
        case ElementwiseOp::kAddRelu: return "torch.relu(" + a[0] + " + " + a[1] + ")";
        case ElementwiseOp::kRelu: return "torch.relu(" + a[0] + ")";
        case ElementwiseOp::kSigmoid: return "torch.sigmoid(" + a[0] + ")";
        case ElementwiseOp::kDivConst: return a[0] + " / " + py_real(p.constant);
        case ElementwiseOp::kRowScale: return a[0] + ".unsqueeze(1) * " + a[1];
      }
      break;
    case NodeKind::kMatMul:
      return "torch.matmul(" + a[0] + ", " + a[1] + (p.transpose_b ? ".T)" : ")");
    case NodeKind::kDiagMatMul:
      return "torch.diag(" + a[0] + ") @ " + a[1];
    case NodeKind::kReduction: {
      const std::string fn = p.reduce == ReduceOp::kSum ? "torch.sum(" : "torch.mean(";
      if (!p.axis) return fn + a[0] + ").reshape(1)";
      return fn + a[0] + ", dim=" + std::to_string(*p.axis) +
             (p.keepdim ? ", keepdim=True)" : ")");
    }
    case NodeKind::kScale:
      return a[0] + " * " + py_real(p.constant);
    case NodeKind::kConv:
      return "torch.nn.functional.conv2d(" + a[0] + "[None, None], " + a[1] +
             "[None, None])[0, 0]";
  }
  return "None";
}

bool is_under(const fs::path& p, const fs::path& root) {
  auto r = root.begin();
  auto q = p.begin();
  for (; r != root.end(); ++r, ++q) {
    if (q == p.end() || *q != *r) return false;
  }
  return true;
}

}  // namespace

std::string render_model_py(const OperatorTask& task) {
  const auto& g = task.graph;
  std::ostringstream os;
  os << "import torch\nimport torch.nn as nn\n\n\n"
     << "class Model(nn.Module):\n"
     << "    \"\"\"Reference implementation of task " << task.task_id << ".\"\"\"\n\n"
     << "    def __init__(self):\n        super().__init__()\n\n"
     << "    def forward(self";
  for (std::size_t i = 0; i < g.inputs.size(); ++i) os << ", x" << i;
  os << "):\n";
  for (const auto& n : g.nodes) os << "        " << var_name(n.id) << " = " << py_expr(n) << "\n";
  os << "        return ";
  for (std::size_t i = 0; i < g.outputs.size(); ++i) {
    os << (i ? ", " : "") << var_name(g.outputs[i]);
  }
  if (g.outputs.empty()) os << "None";
  os << "\n\n\ndef get_inputs():\n    return [";
  for (std::size_t i = 0; i < g.inputs.size(); ++i) {
    os << (i ? ", " : "") << (g.inputs[i].seedable ? "torch.randn(" : "torch.ones(");
    for (std::size_t d = 0; d < g.inputs[i].shape.size(); ++d) {
      os << (d ? ", " : "") << g.inputs[i].shape[d];
    }
    os << ")";
  }
  os << "]\n\n\ndef get_init_inputs():\n    return []\n";
  return os.str();
}

Workspace init_workspace(const OperatorTask& task, std::string_view skill_asset,
                         const fs::path& root) {
  if (fs::exists(root)) fs::remove_all(root);
  fs::create_directories(root / "kernels");
  fs::create_directories(root / "utils");
  write_text_file_atomic(root / "binding_registry.h", kBindingRegistry);
  write_text_file_atomic(root / "binding.cpp", kBindingCpp);
  write_text_file_atomic(root / "utils" / "compile.sh", kCompileSh);
  write_text_file_atomic(root / "utils" / "verification.py", kVerificationPy);
  write_text_file_atomic(root / "utils" / "profiling.py", kProfilingPy);
  write_text_file_atomic(root / "model.py", render_model_py(task));
  write_text_file_atomic(root / "model_new.py", kModelNewPy);
  write_text_file_atomic(root / "SKILL.md", std::string(skill_asset));

  Workspace ws;
  ws.root = fs::canonical(root);
  ws.permissions = {
      {"kernels/", true, ""},
      {"model_new.py", true, ""},
      {"utils/", false, "protected utility"},
      {"binding.cpp", false, "fixed infrastructure"},
      {"binding_registry.h", false, "fixed infrastructure"},
      {"model.py", false, "reference model is read-only"},
      {"SKILL.md", false, "skill document is read-only"},
  };
  return ws;
}

PermissionDecision check_permission(const Workspace& ws, std::string_view path, AccessMode mode) {
  PermissionDecision d;
  fs::path p(path);
  if (p.is_relative()) p = ws.root / p;
  p = p.lexically_normal();
  // Follow any existing symlinks so links cannot smuggle a path out.
  std::error_code ec;
  const fs::path resolved = fs::weakly_canonical(p, ec);
  if (ec || !is_under(p, ws.root) || !is_under(resolved, ws.root)) {
    d.reason = "escape";
    return d;
  }
  auto rel = resolved.lexically_relative(ws.root).generic_string();
  if (rel == ".") rel.clear();
  d.relative = rel;
  if (mode == AccessMode::kRead) {
    d.allowed = true;
    return d;
  }
  if (rel.empty()) {
    d.reason = "workspace root is read-only";
    return d;
  }
  for (const auto& rule : ws.permissions) {
    const bool dir_rule = rule.prefix.ends_with('/');
    const bool match = dir_rule ? rel.starts_with(rule.prefix) : rel == rule.prefix;
    if (!match) continue;
    d.allowed = rule.writable;
    d.reason = rule.writable ? "" : rule.reason;
    return d;
  }
  // Layout directories themselves and any other path stay read-only.
  for (const auto& rule : ws.permissions) {
    if (rule.prefix.ends_with('/') && rel + "/" == rule.prefix) {
      d.reason = rule.writable ? "layout directory cannot be replaced" : rule.reason;
      return d;
    }
  }
  d.reason = "read-only path";
  return d;
}

std::vector<std::string> list_files(const fs::path& root) {
  std::vector<std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(e.path().lexically_relative(root).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string tree_digest(const fs::path& root) {
  std::string acc;
  std::vector<std::string> entries;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    auto rel = e.path().lexically_relative(root).generic_string();
    entries.push_back(e.is_directory() ? rel + "/" : rel);
  }
  std::sort(entries.begin(), entries.end());
  for (const auto& rel : entries) {
    acc += rel;
    acc.push_back('\0');
    if (!rel.ends_with('/')) acc += sha256_hex(read_text_file(root / rel));
    acc.push_back('\n');
  }
  return sha256_hex(acc);
}

std::string source_digest(const Workspace& ws) {
  std::string acc;
  for (const auto& rel : list_files(ws.root / "kernels")) {
    acc += "kernels/" + rel + '\0' + sha256_hex(read_text_file(ws.root / "kernels" / rel)) + '\n';
  }
  if (fs::exists(ws.root / "model_new.py")) {
    acc += "model_new.py" + std::string(1, '\0') + sha256_hex(read_text_file(ws.root / "model_new.py"));
  }
  return sha256_hex(acc);
}

}  // namespace kernelforge
