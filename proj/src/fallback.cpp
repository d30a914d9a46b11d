// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/fallback.hpp"

#include <algorithm>
#include <regex>

#include "kernelforge/task_io.hpp"

namespace kernelforge {

namespace {

const std::vector<std::regex>& banned_patterns() {
  static const std::vector<std::regex> patterns = [] {
    const char* sources[] = {
        R"(torch\s*::\s*nn\s*::\s*functional)",
        R"(\btorch\s*::\s*(?!(?:Tensor|empty|empty_like|kFloat32)\b)[A-Za-z_]\w*)",
        R"(\bat\s*::\s*(?!Tensor\b)[A-Za-z_]\w*\s*\()",
        R"(torch\s*\.\s*nn\s*\.\s*functional)",
        R"(\bF\s*\.\s*[A-Za-z_]\w*\s*\()",
        R"(\btorch\s*\.\s*(?:matmul|mm|bmm|addmm|einsum|sum|mean|relu|sigmoid|tanh|softmax|add|mul|div|exp|diag|conv2d|conv1d|max|min)\s*\()",
        R"(\.\s*(?:matmul|mm|bmm|sum|mean|relu|sigmoid|softmax|exp)\s*\()",
        R"(\bnn\s*\.\s*(?:Linear|Conv1d|Conv2d|ReLU|Sigmoid|Softmax)\s*\()",
    };
    std::vector<std::regex> out;
    for (const char* s : sources) out.emplace_back(s, std::regex::ECMAScript | std::regex::optimize);
    return out;
  }();
  return patterns;
}

}  // namespace

FallbackScan detect_fallback_violation(std::string_view source) {
  FallbackScan scan;
  const std::string text(source);
  for (const auto& re : banned_patterns()) {
    for (std::sregex_iterator it(text.begin(), text.end(), re), end; it != end; ++it) {
      scan.matches.push_back({"", static_cast<std::size_t>(it->position()), it->str()});
    }
  }
  std::sort(scan.matches.begin(), scan.matches.end(), [](const auto& a, const auto& b) {
    return a.offset != b.offset ? a.offset < b.offset : a.text.size() > b.text.size();
  });
  // Patterns overlap (torch.mm also matches .mm); report each span once.
  std::vector<FallbackMatch> merged;
  for (auto& m : scan.matches) {
    if (!merged.empty() && m.offset < merged.back().offset + merged.back().text.size()) continue;
    merged.push_back(std::move(m));
  }
  scan.matches = std::move(merged);
  scan.violation = !scan.matches.empty();
  return scan;
}

FallbackScan scan_workspace_for_fallback(const Workspace& ws) {
  FallbackScan scan;
  std::vector<std::string> files;
  for (const auto& rel : list_files(ws.root / "kernels")) files.push_back("kernels/" + rel);
  if (std::filesystem::exists(ws.root / "model_new.py")) files.push_back("model_new.py");
  for (const auto& rel : files) {
    auto one = detect_fallback_violation(read_text_file(ws.root / rel));
    for (auto& m : one.matches) {
      m.file = rel;
      scan.matches.push_back(std::move(m));
    }
  }
  scan.violation = !scan.matches.empty();
  return scan;
}

}  // namespace kernelforge
