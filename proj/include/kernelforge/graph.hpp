// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kernelforge/tensor.hpp"

namespace kernelforge {

// Node catalog. This file together with interpreter.cpp is the single source
// of truth for operator semantics.
//
//   elementwise  add(a, b), mul(a, b), add_relu(a, b)      equal shapes
//                relu(x), sigmoid(x), div_const(x; constant)
//                row_scale(v[N], X[N, M]) -> v[i] * X[i, j]
//   matmul       A[N, K] . B[K, M]   (B[M, K] when transpose_b)
//   diag_matmul  diag(a[N]) . B[N, M], eager path materializes diag(a)
//   reduction    sum | mean over one axis (keepdim optional) or over all
//                elements when axis is absent; a full reduction is shape [1]
//   scale        x * constant
//   conv         stride-1 valid 2-D cross-correlation X[H, W] * K[kh, kw],
//                window extents at most kMaxConvWindow
//
// Graph inputs are referenced as "$0", "$1", ...; node ids must not start
// with '$'.

enum class NodeKind { kElementwise, kMatMul, kDiagMatMul, kReduction, kScale, kConv };

enum class ElementwiseOp { kAdd, kMul, kRelu, kSigmoid, kDivConst, kRowScale, kAddRelu };

enum class ReduceOp { kSum, kMean };

inline constexpr std::int64_t kMaxConvWindow = 7;

enum class DType { kF32 };

struct TensorSpec {
  Shape shape;
  DType dtype = DType::kF32;
  bool seedable = true;

  friend bool operator==(const TensorSpec&, const TensorSpec&) = default;
};

struct NodeParams {
  ElementwiseOp elementwise = ElementwiseOp::kAdd;
  ReduceOp reduce = ReduceOp::kSum;
  std::optional<std::int64_t> axis;  // reduction; absent = all elements
  bool keepdim = false;              // reduction
  bool transpose_b = false;          // matmul
  double constant = 1.0;             // scale, div_const

  friend bool operator==(const NodeParams&, const NodeParams&) = default;
};

struct OperatorNode {
  std::string id;
  NodeKind kind = NodeKind::kElementwise;
  std::vector<std::string> inputs;
  NodeParams params;

  friend bool operator==(const OperatorNode&, const OperatorNode&) = default;
};

struct OpGraph {
  std::vector<TensorSpec> inputs;
  std::vector<OperatorNode> nodes;  // topologically ordered
  std::vector<std::string> outputs;

  friend bool operator==(const OpGraph&, const OpGraph&) = default;
};

enum class LevelTag { kL1, kL2, kL3 };

struct Provenance {
  enum class Kind { kSeed, kComposite, kTransformerLike };
  Kind kind = Kind::kSeed;
  int k = 1;  // composite depth, 1..5

  static Provenance seed() { return {Kind::kSeed, 1}; }
  static Provenance composite(int k) { return {Kind::kComposite, k}; }
  static Provenance transformer_like() { return {Kind::kTransformerLike, 1}; }

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

enum class InputDistribution { kStandardNormal, kUniform };

/// Seed policy for runtime inputs. Per-input streams are split from the
/// caller-provided master seed; `base_seed` seeds the verification inputs.
struct InputPolicy {
  InputDistribution distribution = InputDistribution::kStandardNormal;
  std::uint64_t base_seed = 0;

  friend bool operator==(const InputPolicy&, const InputPolicy&) = default;
};

struct OperatorTask {
  std::string task_id;
  OpGraph graph;
  std::optional<LevelTag> level_tag;
  Provenance provenance;
  InputPolicy input_policy;

  friend bool operator==(const OperatorTask&, const OperatorTask&) = default;
};

struct Violation {
  std::string node_id;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

ValidationResult validate_graph(const OpGraph& graph,
                                std::int64_t element_cap = kDefaultElementCap);

/// Same checks plus the task-level provenance invariant.
ValidationResult validate_task(const OperatorTask& task,
                               std::int64_t element_cap = kDefaultElementCap);

/// Output shape of a single node given its input shapes; nullopt with a
/// message in `why` when the shapes are not admissible for the kind.
std::optional<Shape> infer_node_shape(const OperatorNode& node,
                                      const std::vector<Shape>& input_shapes,
                                      std::string* why = nullptr);

/// Shapes of every reference ("$i" and node ids). Throws std::invalid_argument
/// when the graph does not validate.
std::map<std::string, Shape> infer_shapes(const OpGraph& graph);

/// Input count expected by a node, fixed by kind and elementwise op.
std::size_t expected_arity(const OperatorNode& node);

/// Elementwise-class nodes (elementwise ops and scale) are the ones a
/// compiler may fuse freely.
bool is_elementwise_like(const OperatorNode& node);

inline std::string input_ref(std::size_t i) { return "$" + std::to_string(i); }
std::optional<std::size_t> parse_input_ref(std::string_view ref);

/// Index of a node by id, or nullopt.
std::optional<std::size_t> find_node(const OpGraph& graph, std::string_view id);

/// Number of nodes consuming each reference, graph outputs included.
std::map<std::string, int> use_counts(const OpGraph& graph);

std::string_view to_string(NodeKind kind);
std::string_view to_string(ElementwiseOp op);
std::string_view to_string(ReduceOp op);
std::string_view to_string(LevelTag level);
std::string to_string(const Provenance& provenance);
std::optional<NodeKind> parse_node_kind(std::string_view s);
std::optional<ElementwiseOp> parse_elementwise_op(std::string_view s);
std::optional<ReduceOp> parse_reduce_op(std::string_view s);
std::optional<LevelTag> parse_level_tag(std::string_view s);
std::optional<Provenance> parse_provenance(std::string_view s);

}  // namespace kernelforge
