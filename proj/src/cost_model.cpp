// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/cost_model.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

namespace kernelforge {

void CostModelParams::validate() const {
  if (!(launch_overhead_us >= 0.0)) throw std::invalid_argument("launch_overhead_us must be >= 0");
  if (!(bytes_per_second > 0.0)) throw std::invalid_argument("bytes_per_second must be > 0");
  if (!(flops_per_second > 0.0)) throw std::invalid_argument("flops_per_second must be > 0");
  if (!(noise_relative_sigma >= 0.0 && noise_relative_sigma < 0.1)) {
    throw std::invalid_argument("noise_relative_sigma must be in [0, 0.1)");
  }
}

NodeWork node_work(const OperatorNode& node, const std::map<std::string, Shape>& shapes) {
  const auto& out = shapes.at(node.id);
  const auto out_n = static_cast<double>(numel(out));
  NodeWork w;
  switch (node.kind) {
    case NodeKind::kElementwise:
      switch (node.params.elementwise) {
        case ElementwiseOp::kSigmoid: w.flops = 4.0 * out_n; break;
        case ElementwiseOp::kAddRelu: w.flops = 2.0 * out_n; break;
        default: w.flops = out_n; break;
      }
      break;
    case NodeKind::kScale:
      w.flops = out_n;
      break;
    case NodeKind::kMatMul: {
      const auto& a = shapes.at(node.inputs[0]);
      w.flops = 2.0 * static_cast<double>(a[0]) * static_cast<double>(a[1]) *
                static_cast<double>(out[1]);
      break;
    }
    case NodeKind::kDiagMatMul: {
      // diag() materializes an N x N matrix (written, then read by the GEMM).
      const auto n = static_cast<double>(out[0]);
      w.flops = 2.0 * n * n * static_cast<double>(out[1]);
      w.internal_bytes = 2.0 * n * n * kBytesPerElement;
      w.extra_launches = 1;
      break;
    }
    case NodeKind::kReduction:
      w.flops = static_cast<double>(numel(shapes.at(node.inputs[0])));
      break;
    case NodeKind::kConv: {
      const auto& k = shapes.at(node.inputs[1]);
      w.flops = 2.0 * out_n * static_cast<double>(k[0] * k[1]);
      break;
    }
  }
  return w;
}

double kernel_cost_ms(const OpGraph& graph, const std::map<std::string, Shape>& shapes,
                      const std::vector<std::string>& group, const CostModelParams& params) {
  const std::set<std::string> members(group.begin(), group.end());
  std::set<std::string> reads;
  std::set<std::string> consumed_outside;
  for (const auto& o : graph.outputs) consumed_outside.insert(o);
  double flops = 0.0;
  double bytes = 0.0;
  int launches = 1;
  for (const auto& node : graph.nodes) {
    const bool inside = members.count(node.id) > 0;
    for (const auto& r : node.inputs) {
      if (inside && !members.count(r)) reads.insert(r);
      if (!inside && members.count(r)) consumed_outside.insert(r);
    }
    if (inside) {
      const auto w = node_work(node, shapes);
      flops += w.flops;
      bytes += w.internal_bytes;
      launches += w.extra_launches;
    }
  }
  for (const auto& r : reads) bytes += static_cast<double>(numel(shapes.at(r))) * kBytesPerElement;
  for (const auto& id : members) {
    if (consumed_outside.count(id)) {
      bytes += static_cast<double>(numel(shapes.at(id))) * kBytesPerElement;
    }
  }
  return launches * params.launch_overhead_us * 1e-3 + bytes / params.bytes_per_second * 1e3 +
         flops / params.flops_per_second * 1e3;
}

double partition_cost_ms(const OpGraph& graph, const Partition& partition,
                         const CostModelParams& params) {
  const auto shapes = infer_shapes(graph);
  double total = 0.0;
  for (const auto& group : partition) total += kernel_cost_ms(graph, shapes, group, params);
  return total;
}

Partition singleton_partition(const OpGraph& graph) {
  Partition p;
  for (const auto& n : graph.nodes) p.push_back({n.id});
  return p;
}

double cost_eager(const OpGraph& graph, const CostModelParams& params) {
  return partition_cost_ms(graph, singleton_partition(graph), params);
}

bool is_valid_partition(const OpGraph& graph, const Partition& partition, std::string* why) {
  auto fail = [&](std::string msg) {
    if (why) *why = std::move(msg);
    return false;
  };
  std::map<std::string, std::size_t> group_of;
  for (std::size_t g = 0; g < partition.size(); ++g) {
    if (partition[g].empty()) return fail("empty kernel group");
    for (const auto& id : partition[g]) {
      if (!find_node(graph, id)) return fail("unknown node " + id + " in partition");
      if (!group_of.emplace(id, g).second) return fail("overlapping partitions at node " + id);
    }
  }
  for (const auto& n : graph.nodes) {
    if (!group_of.count(n.id)) return fail("node " + n.id + " not covered by partition");
  }

  // Per group: at most one heavy node, connected through internal edges.
  for (std::size_t g = 0; g < partition.size(); ++g) {
    const auto& ids = partition[g];
    int heavy = 0;
    std::map<std::string, std::string> parent;
    for (const auto& id : ids) {
      parent[id] = id;
      if (!is_elementwise_like(graph.nodes[*find_node(graph, id)])) ++heavy;
    }
    if (heavy > 1) return fail("kernel group " + std::to_string(g) + " fuses more than one heavy node");
    auto root = [&](std::string x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (const auto& id : ids) {
      for (const auto& r : graph.nodes[*find_node(graph, id)].inputs) {
        if (parent.count(r)) parent[root(r)] = root(id);
      }
    }
    std::set<std::string> roots;
    for (const auto& id : ids) roots.insert(root(id));
    if (roots.size() != 1) return fail("kernel group " + std::to_string(g) + " is not connected");
  }

  // Kernel-level dependency graph must be acyclic (groups are convex).
  const std::size_t k = partition.size();
  std::vector<std::set<std::size_t>> succ(k);
  std::vector<int> indeg(k, 0);
  for (const auto& n : graph.nodes) {
    const auto to = group_of.at(n.id);
    for (const auto& r : n.inputs) {
      auto it = group_of.find(r);
      if (it == group_of.end() || it->second == to) continue;
      if (succ[it->second].insert(to).second) ++indeg[to];
    }
  }
  std::vector<std::size_t> ready;
  for (std::size_t g = 0; g < k; ++g) {
    if (indeg[g] == 0) ready.push_back(g);
  }
  std::size_t visited = 0;
  while (!ready.empty()) {
    auto g = ready.back();
    ready.pop_back();
    ++visited;
    for (auto s : succ[g]) {
      if (--indeg[s] == 0) ready.push_back(s);
    }
  }
  if (visited != k) return fail("partition creates a cycle between kernels");
  return true;
}

namespace {

Partition labels_to_partition(const OpGraph& graph, const std::vector<std::size_t>& label) {
  Partition p;
  std::map<std::size_t, std::size_t> slot;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    auto [it, fresh] = slot.emplace(label[i], p.size());
    if (fresh) p.emplace_back();
    p[it->second].push_back(graph.nodes[i].id);
  }
  return p;
}

// Walks producer->consumer edges in topological order and merges the two
// kernels whenever `admissible` accepts the union and the result stays valid.
template <typename Admissible>
Partition greedy_fusion(const OpGraph& graph, Admissible admissible) {
  const auto n = graph.nodes.size();
  std::vector<std::size_t> label(n);
  std::iota(label.begin(), label.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& r : graph.nodes[i].inputs) {
      auto p = find_node(graph, r);
      if (!p || label[*p] == label[i]) continue;
      const auto from = label[i];
      const auto to = label[*p];
      std::vector<std::size_t> members;
      for (std::size_t j = 0; j < n; ++j) {
        if (label[j] == from || label[j] == to) members.push_back(j);
      }
      if (!admissible(members)) continue;
      auto trial = label;
      for (auto j : members) trial[j] = std::min(from, to);
      if (is_valid_partition(graph, labels_to_partition(graph, trial))) label = std::move(trial);
    }
  }
  return labels_to_partition(graph, label);
}

}  // namespace

Partition greedy_elementwise_fusion(const OpGraph& graph) {
  return greedy_fusion(graph, [&](const std::vector<std::size_t>& members) {
    return std::all_of(members.begin(), members.end(),
                       [&](std::size_t j) { return is_elementwise_like(graph.nodes[j]); });
  });
}

Partition maximal_fusion(const OpGraph& graph) {
  return greedy_fusion(graph, [&](const std::vector<std::size_t>& members) {
    return std::count_if(members.begin(), members.end(), [&](std::size_t j) {
             return !is_elementwise_like(graph.nodes[j]);
           }) <= 1;
  });
}

double cost_compiled(const OpGraph& graph, const CostModelParams& params) {
  return partition_cost_ms(graph, greedy_elementwise_fusion(graph), params);
}

}  // namespace kernelforge
