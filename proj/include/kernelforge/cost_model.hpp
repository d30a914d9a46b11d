// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kernelforge/graph.hpp"

namespace kernelforge {

/// Simulated device. Defaults describe a desk-scale device on which the
/// 1-100 ms filtering window corresponds to 10^5..10^7-element workloads.
struct CostModelParams {
  double launch_overhead_us = 100.0;
  double bytes_per_second = 1e9;
  double flops_per_second = 1e10;
  double noise_relative_sigma = 0.01;
  std::uint64_t rng_seed = 0;

  /// Throws std::invalid_argument unless rates > 0 and 0 <= sigma < 0.1.
  void validate() const;

  friend bool operator==(const CostModelParams&, const CostModelParams&) = default;
};

inline constexpr double kBytesPerElement = 4.0;

/// Kernel grouping of node ids.
using Partition = std::vector<std::vector<std::string>>;

/// Work a node does independent of how it is grouped.
struct NodeWork {
  double flops = 0.0;
  double internal_bytes = 0.0;  // traffic the node always pays (e.g. materialized diag)
  int extra_launches = 0;       // launches beyond the one its kernel already pays
};

NodeWork node_work(const OperatorNode& node, const std::map<std::string, Shape>& shapes);

/// One kernel: launch + traffic + compute. Traffic counts every distinct
/// tensor read from outside the group and every group result consumed
/// outside it (graph outputs included).
double kernel_cost_ms(const OpGraph& graph, const std::map<std::string, Shape>& shapes,
                      const std::vector<std::string>& group, const CostModelParams& params);

double partition_cost_ms(const OpGraph& graph, const Partition& partition,
                         const CostModelParams& params);

Partition singleton_partition(const OpGraph& graph);

/// Eager execution: one kernel per node.
double cost_eager(const OpGraph& graph, const CostModelParams& params);

/// Greedy maximal fusion restricted to elementwise-like nodes, the
/// compile-baseline analog. Performs no algebraic rewrites.
Partition greedy_elementwise_fusion(const OpGraph& graph);
double cost_compiled(const OpGraph& graph, const CostModelParams& params);

/// Greedy fusion that also lets one heavy node (matmul, reduction, ...)
/// absorb its elementwise neighbours. What a hand-written kernel can do.
Partition maximal_fusion(const OpGraph& graph);

/// Checks cover-exactly-once, connectivity, at most one non-elementwise node
/// per group, and that the kernel-level graph is acyclic.
bool is_valid_partition(const OpGraph& graph, const Partition& partition,
                        std::string* why = nullptr);

}  // namespace kernelforge
