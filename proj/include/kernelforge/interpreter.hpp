// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernelforge/graph.hpp"
#include "kernelforge/tensor.hpp"

namespace kernelforge {

/// Raised when interpretation produces a NaN or infinity; names the node.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(std::string node_id)
      : std::runtime_error("non-finite value produced at node " + node_id),
        node_id_(std::move(node_id)) {}
  const std::string& node_id() const { return node_id_; }

 private:
  std::string node_id_;
};

/// Reference interpreter. Pure; 64-bit arithmetic throughout.
std::vector<Tensor> evaluate_reference(const OpGraph& graph,
                                       const std::vector<Tensor>& inputs);

/// Applies one node to already-evaluated operands.
Tensor evaluate_node(const OperatorNode& node, const std::vector<const Tensor*>& operands);

/// Deterministic in (task, seed). Each input gets its own stream split from
/// the master seed, so adding an input never perturbs the others.
std::vector<Tensor> generate_inputs(const OperatorTask& task, std::uint64_t seed,
                                    std::int64_t element_cap = kDefaultElementCap);

/// Seed of the i-th derived stream of `master`. Used for input streams and
/// the fixed verification seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace kernelforge
