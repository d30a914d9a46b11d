// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "kernelforge/graph.hpp"

namespace kernelforge {

// Structural similarity between operator graphs.
//
// A graph is unfolded into an ordered tree: a virtual root whose children
// are the output nodes, each operator node's children being its operator
// operands in argument order. Graph inputs carry no structure and are
// dropped; shared subgraphs are duplicated by the unfolding. Labels are
// (kind, op, arity, params with reals rounded to 3 significant digits).
//
// similarity = (m - d) / m, clamped to [0, 1], where d is the unit-cost
// Zhang-Shasha tree edit distance and m the larger operator-node count.
// Two graphs without operator nodes have similarity 1.

/// Ordered labelled tree in postorder. `leftmost[i]` is the postorder index
/// of the leftmost leaf of the subtree rooted at i.
struct LabelTree {
  std::vector<std::string> labels;
  std::vector<int> leftmost;
  std::vector<std::vector<int>> children;  // postorder indices

  int size() const { return static_cast<int>(labels.size()); }
};

/// Canonical label of a node.
std::string structural_label(const OperatorNode& node);

/// Unfolds a graph under a virtual root (the last postorder entry). Stops
/// expanding once `max_nodes` operator nodes have been emitted.
LabelTree unfold_graph(const OpGraph& graph, int max_nodes = 1024);

/// Unit-cost ordered tree edit distance.
int tree_edit_distance(const LabelTree& a, const LabelTree& b);

double structural_similarity(const OpGraph& a, const OpGraph& b);

}  // namespace kernelforge
