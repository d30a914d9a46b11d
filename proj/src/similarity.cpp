// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/similarity.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>

namespace kernelforge {

namespace {

constexpr const char* kRootLabel = "<root>";

std::string round3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

std::string structural_label(const OperatorNode& node) {
  std::string s(to_string(node.kind));
  const auto& p = node.params;
  switch (node.kind) {
    case NodeKind::kElementwise:
      s += ":" + std::string(to_string(p.elementwise));
      if (p.elementwise == ElementwiseOp::kDivConst) s += ":c=" + round3(p.constant);
      break;
    case NodeKind::kReduction:
      s += ":" + std::string(to_string(p.reduce));
      s += ":axis=" + (p.axis ? std::to_string(*p.axis) : std::string("all"));
      if (p.keepdim) s += ":keepdim";
      break;
    case NodeKind::kScale:
      s += ":c=" + round3(p.constant);
      break;
    case NodeKind::kMatMul:
      if (p.transpose_b) s += ":tb";
      break;
    case NodeKind::kDiagMatMul:
    case NodeKind::kConv:
      break;
  }
  return s + "/" + std::to_string(node.inputs.size());
}

LabelTree unfold_graph(const OpGraph& graph, int max_nodes) {
  LabelTree tree;
  int emitted = 0;
  // Returns the postorder index of the emitted subtree.
  std::function<int(std::size_t)> emit = [&](std::size_t idx) {
    const auto& node = graph.nodes[idx];
    ++emitted;
    std::vector<int> kids;
    for (const auto& ref : node.inputs) {
      if (parse_input_ref(ref) || emitted >= max_nodes) continue;
      if (auto child = find_node(graph, ref)) kids.push_back(emit(*child));
    }
    const int self = tree.size();
    tree.labels.push_back(structural_label(node));
    tree.leftmost.push_back(kids.empty() ? self : tree.leftmost[kids.front()]);
    tree.children.push_back(std::move(kids));
    return self;
  };
  std::vector<int> roots;
  for (const auto& out : graph.outputs) {
    if (emitted >= max_nodes) break;
    if (auto idx = find_node(graph, out)) roots.push_back(emit(*idx));
  }
  const int self = tree.size();
  tree.labels.push_back(kRootLabel);
  tree.leftmost.push_back(roots.empty() ? self : tree.leftmost[roots.front()]);
  tree.children.push_back(std::move(roots));
  return tree;
}

int tree_edit_distance(const LabelTree& a, const LabelTree& b) {
  const int n = a.size();
  const int m = b.size();
  if (n == 0 || m == 0) return std::max(n, m);

  // Keyroots: the highest node of each distinct leftmost leaf.
  auto keyroots = [](const LabelTree& t) {
    std::vector<int> kr;
    for (int i = 0; i < t.size(); ++i) {
      bool highest = true;
      for (int j = i + 1; j < t.size(); ++j) {
        if (t.leftmost[j] == t.leftmost[i]) {
          highest = false;
          break;
        }
      }
      if (highest) kr.push_back(i);
    }
    return kr;
  };

  std::vector<std::vector<int>> td(n, std::vector<int>(m, 0));
  std::vector<std::vector<int>> fd(n + 1, std::vector<int>(m + 1, 0));
  for (int i : keyroots(a)) {
    for (int j : keyroots(b)) {
      const int li = a.leftmost[i];
      const int lj = b.leftmost[j];
      // fd[x][y]: forest a[li..li+x-1] vs b[lj..lj+y-1].
      fd[0][0] = 0;
      for (int x = 1; x <= i - li + 1; ++x) fd[x][0] = fd[x - 1][0] + 1;
      for (int y = 1; y <= j - lj + 1; ++y) fd[0][y] = fd[0][y - 1] + 1;
      for (int x = 1; x <= i - li + 1; ++x) {
        for (int y = 1; y <= j - lj + 1; ++y) {
          const int ai = li + x - 1;
          const int bj = lj + y - 1;
          const int del = fd[x - 1][y] + 1;
          const int ins = fd[x][y - 1] + 1;
          if (a.leftmost[ai] == li && b.leftmost[bj] == lj) {
            const int rel = fd[x - 1][y - 1] + (a.labels[ai] == b.labels[bj] ? 0 : 1);
            fd[x][y] = std::min({del, ins, rel});
            td[ai][bj] = fd[x][y];
          } else {
            const int px = a.leftmost[ai] - li;
            const int py = b.leftmost[bj] - lj;
            fd[x][y] = std::min({del, ins, fd[px][py] + td[ai][bj]});
          }
        }
      }
    }
  }
  return td[n - 1][m - 1];
}

double structural_similarity(const OpGraph& a, const OpGraph& b) {
  const auto ta = unfold_graph(a);
  const auto tb = unfold_graph(b);
  // Both trees share the virtual root, which never costs anything.
  const int larger = std::max(ta.size(), tb.size()) - 1;
  if (larger == 0) return 1.0;
  const int d = tree_edit_distance(ta, tb);
  return std::clamp(static_cast<double>(larger - d) / larger, 0.0, 1.0);
}

}  // namespace kernelforge
