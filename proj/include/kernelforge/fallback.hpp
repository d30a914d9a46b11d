// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "kernelforge/workspace.hpp"

namespace kernelforge {

// Detection of framework fallbacks in agent-written sources. Patterns match
// anywhere in the text, comments and strings included, so a commented-out
// call is still reported.
//
//   C++/CUDA   torch::nn::functional, any torch:: name other than Tensor,
//              empty, empty_like and kFloat32, and at:: calls
//   Python     torch.nn.functional, F.<op>(, torch.<compute op>(, and
//              tensor compute methods such as .matmul( or .sum(

struct FallbackMatch {
  std::string file;  // root-relative, empty for raw text scans
  std::size_t offset = 0;
  std::string text;
};

struct FallbackScan {
  bool violation = false;
  std::vector<FallbackMatch> matches;
};

FallbackScan detect_fallback_violation(std::string_view source);

/// Scans kernels/** and model_new.py.
FallbackScan scan_workspace_for_fallback(const Workspace& ws);

}  // namespace kernelforge
