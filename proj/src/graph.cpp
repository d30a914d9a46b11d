// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/graph.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <set>
#include <sstream>

namespace kernelforge {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::string ValidationResult::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) {
    os << (v.node_id.empty() ? "<graph>" : v.node_id) << ": " << v.message << '\n';
  }
  return os.str();
}

std::size_t expected_arity(const OperatorNode& node) {
  switch (node.kind) {
    case NodeKind::kElementwise:
      switch (node.params.elementwise) {
        case ElementwiseOp::kAdd:
        case ElementwiseOp::kMul:
        case ElementwiseOp::kAddRelu:
        case ElementwiseOp::kRowScale:
          return 2;
        case ElementwiseOp::kRelu:
        case ElementwiseOp::kSigmoid:
        case ElementwiseOp::kDivConst:
          return 1;
      }
      return 1;
    case NodeKind::kMatMul:
    case NodeKind::kDiagMatMul:
    case NodeKind::kConv:
      return 2;
    case NodeKind::kReduction:
    case NodeKind::kScale:
      return 1;
  }
  return 0;
}

bool is_elementwise_like(const OperatorNode& node) {
  return node.kind == NodeKind::kElementwise || node.kind == NodeKind::kScale;
}

namespace {

std::optional<Shape> fail(std::string* why, std::string msg) {
  if (why) *why = std::move(msg);
  return std::nullopt;
}

}  // namespace

std::optional<Shape> infer_node_shape(const OperatorNode& node,
                                      const std::vector<Shape>& in,
                                      std::string* why) {
  if (in.size() != expected_arity(node)) return fail(why, "arity mismatch");
  switch (node.kind) {
    case NodeKind::kElementwise: {
      const auto op = node.params.elementwise;
      if (op == ElementwiseOp::kRowScale) {
        if (in[0].size() != 1 || in[1].size() != 2 || in[0][0] != in[1][0]) {
          return fail(why, "row_scale expects v[N] and X[N,M], got " +
                               shape_to_string(in[0]) + " and " +
                               shape_to_string(in[1]));
        }
        return in[1];
      }
      if (in.size() == 2 && in[0] != in[1]) {
        return fail(why, "elementwise operands differ " + shape_to_string(in[0]) +
                             " vs " + shape_to_string(in[1]));
      }
      if (op == ElementwiseOp::kDivConst && node.params.constant == 0.0) {
        return fail(why, "div_const by zero");
      }
      return in[0];
    }
    case NodeKind::kScale:
      return in[0];
    case NodeKind::kMatMul: {
      const auto& a = in[0];
      const auto& b = in[1];
      if (a.size() != 2 || b.size() != 2) return fail(why, "matmul expects rank-2 operands");
      const auto b_rows = node.params.transpose_b ? b[1] : b[0];
      const auto b_cols = node.params.transpose_b ? b[0] : b[1];
      if (a[1] != b_rows) {
        return fail(why, "inner dimension " + shape_to_string(a) + " x " +
                             shape_to_string(b));
      }
      return Shape{a[0], b_cols};
    }
    case NodeKind::kDiagMatMul: {
      const auto& a = in[0];
      const auto& b = in[1];
      if (a.size() != 1 || b.size() != 2 || a[0] != b[0]) {
        return fail(why, "diag_matmul expects a[N] and B[N,M], got " +
                             shape_to_string(a) + " and " + shape_to_string(b));
      }
      return b;
    }
    case NodeKind::kReduction: {
      const auto& x = in[0];
      if (!node.params.axis) return Shape{1};
      auto axis = *node.params.axis;
      const auto rank = static_cast<std::int64_t>(x.size());
      if (axis < 0) axis += rank;
      if (axis < 0 || axis >= rank) return fail(why, "reduction axis out of range");
      Shape out = x;
      if (node.params.keepdim) {
        out[static_cast<std::size_t>(axis)] = 1;
      } else {
        out.erase(out.begin() + axis);
        if (out.empty()) out.push_back(1);
      }
      return out;
    }
    case NodeKind::kConv: {
      const auto& x = in[0];
      const auto& k = in[1];
      if (x.size() != 2 || k.size() != 2) return fail(why, "conv expects rank-2 operands");
      if (k[0] > kMaxConvWindow || k[1] > kMaxConvWindow) {
        return fail(why, "conv window larger than " + std::to_string(kMaxConvWindow));
      }
      if (k[0] > x[0] || k[1] > x[1]) return fail(why, "conv window exceeds input");
      return Shape{x[0] - k[0] + 1, x[1] - k[1] + 1};
    }
  }
  return fail(why, "unknown kind");
}

std::optional<std::size_t> parse_input_ref(std::string_view ref) {
  if (ref.size() < 2 || ref[0] != '$') return std::nullopt;
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(ref.data() + 1, ref.data() + ref.size(), v);
  if (ec != std::errc{} || p != ref.data() + ref.size()) return std::nullopt;
  return v;
}

std::optional<std::size_t> find_node(const OpGraph& graph, std::string_view id) {
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (graph.nodes[i].id == id) return i;
  }
  return std::nullopt;
}

std::map<std::string, int> use_counts(const OpGraph& graph) {
  std::map<std::string, int> uses;
  for (const auto& n : graph.nodes) {
    for (const auto& r : n.inputs) ++uses[r];
  }
  for (const auto& o : graph.outputs) ++uses[o];
  return uses;
}

ValidationResult validate_graph(const OpGraph& graph, std::int64_t element_cap) {
  ValidationResult result;
  auto violate = [&](std::string id, std::string msg) {
    result.violations.push_back({std::move(id), std::move(msg)});
  };

  std::map<std::string, Shape> shapes;
  for (std::size_t i = 0; i < graph.inputs.size(); ++i) {
    const auto& spec = graph.inputs[i];
    const auto ref = input_ref(i);
    bool ok = !spec.shape.empty();
    for (auto d : spec.shape) ok = ok && d >= 1;
    if (!ok) {
      violate(ref, "extents must be >= 1 " + shape_to_string(spec.shape));
      continue;
    }
    if (numel(spec.shape) > element_cap) {
      violate(ref, "element cap exceeded");
      continue;
    }
    shapes[ref] = spec.shape;
  }

  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    position.emplace(graph.nodes[i].id, i);
  }

  // Reports whether `from` reaches `target` through input edges.
  std::function<bool(const std::string&, const std::string&, std::set<std::string>&)>
      reaches = [&](const std::string& from, const std::string& target,
                    std::set<std::string>& seen) -> bool {
    if (from == target) return true;
    if (!seen.insert(from).second) return false;
    auto it = position.find(from);
    if (it == position.end()) return false;
    for (const auto& r : graph.nodes[it->second].inputs) {
      if (reaches(r, target, seen)) return true;
    }
    return false;
  };

  std::set<std::string> seen_ids;
  for (const auto& node : graph.nodes) {
    if (node.id.empty() || node.id[0] == '$') {
      violate(node.id, "invalid node id");
      continue;
    }
    if (!seen_ids.insert(node.id).second) {
      violate(node.id, "duplicate id");
      continue;
    }
    if (node.inputs.size() != expected_arity(node)) {
      violate(node.id, "arity mismatch: expected " + std::to_string(expected_arity(node)) +
                           ", got " + std::to_string(node.inputs.size()));
      continue;
    }
    std::vector<Shape> in;
    bool resolved = true;
    for (const auto& ref : node.inputs) {
      if (ref == node.id) {
        violate(node.id, "cycle at node (self-reference)");
        resolved = false;
        break;
      }
      if (auto it = shapes.find(ref); it != shapes.end()) {
        in.push_back(it->second);
        continue;
      }
      resolved = false;
      if (position.count(ref)) {
        std::set<std::string> seen;
        if (reaches(ref, node.id, seen)) {
          violate(node.id, "cycle at node via " + ref);
        } else {
          violate(node.id, "topological order violated: " + ref + " defined later");
        }
      } else {
        violate(node.id, "unknown reference " + ref);
      }
      break;
    }
    if (!resolved) continue;
    std::string why;
    auto out = infer_node_shape(node, in, &why);
    if (!out) {
      violate(node.id, "shape mismatch: " + why);
      continue;
    }
    if (numel(*out) > element_cap) {
      violate(node.id, "element cap exceeded by output " + shape_to_string(*out));
      continue;
    }
    shapes[node.id] = *out;
  }

  if (graph.outputs.empty()) violate("", "graph has no outputs");
  for (const auto& o : graph.outputs) {
    if (!shapes.count(o)) violate(o, "invalid output reference");
  }
  return result;
}

ValidationResult validate_task(const OperatorTask& task, std::int64_t element_cap) {
  auto result = validate_graph(task.graph, element_cap);
  if (task.task_id.empty()) result.violations.push_back({"", "empty task_id"});
  if (task.provenance.kind == Provenance::Kind::kComposite &&
      (task.provenance.k < 1 || task.provenance.k > 5)) {
    result.violations.push_back({"", "composite depth must be in [1, 5]"});
  }
  return result;
}

std::map<std::string, Shape> infer_shapes(const OpGraph& graph) {
  auto v = validate_graph(graph);
  if (!v.ok()) throw std::invalid_argument("invalid graph:\n" + v.to_string());
  std::map<std::string, Shape> shapes;
  for (std::size_t i = 0; i < graph.inputs.size(); ++i) shapes[input_ref(i)] = graph.inputs[i].shape;
  for (const auto& node : graph.nodes) {
    std::vector<Shape> in;
    for (const auto& r : node.inputs) in.push_back(shapes.at(r));
    shapes[node.id] = *infer_node_shape(node, in);
  }
  return shapes;
}

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::kElementwise: return "elementwise";
    case NodeKind::kMatMul: return "matmul";
    case NodeKind::kDiagMatMul: return "diag_matmul";
    case NodeKind::kReduction: return "reduction";
    case NodeKind::kScale: return "scale";
    case NodeKind::kConv: return "conv";
  }
  return "?";
}

std::string_view to_string(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::kAdd: return "add";
    case ElementwiseOp::kMul: return "mul";
    case ElementwiseOp::kRelu: return "relu";
    case ElementwiseOp::kSigmoid: return "sigmoid";
    case ElementwiseOp::kDivConst: return "div_const";
    case ElementwiseOp::kRowScale: return "row_scale";
    case ElementwiseOp::kAddRelu: return "add_relu";
  }
  return "?";
}

std::string_view to_string(ReduceOp op) {
  return op == ReduceOp::kSum ? "sum" : "mean";
}

std::string_view to_string(LevelTag level) {
  switch (level) {
    case LevelTag::kL1: return "L1";
    case LevelTag::kL2: return "L2";
    case LevelTag::kL3: return "L3";
  }
  return "?";
}

std::string to_string(const Provenance& p) {
  switch (p.kind) {
    case Provenance::Kind::kSeed: return "seed";
    case Provenance::Kind::kComposite: return "composite(" + std::to_string(p.k) + ")";
    case Provenance::Kind::kTransformerLike: return "transformer-like";
  }
  return "?";
}

std::optional<NodeKind> parse_node_kind(std::string_view s) {
  for (auto k : {NodeKind::kElementwise, NodeKind::kMatMul, NodeKind::kDiagMatMul,
                 NodeKind::kReduction, NodeKind::kScale, NodeKind::kConv}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::optional<ElementwiseOp> parse_elementwise_op(std::string_view s) {
  for (auto op : {ElementwiseOp::kAdd, ElementwiseOp::kMul, ElementwiseOp::kRelu,
                  ElementwiseOp::kSigmoid, ElementwiseOp::kDivConst,
                  ElementwiseOp::kRowScale, ElementwiseOp::kAddRelu}) {
    if (to_string(op) == s) return op;
  }
  return std::nullopt;
}

std::optional<ReduceOp> parse_reduce_op(std::string_view s) {
  if (s == "sum") return ReduceOp::kSum;
  if (s == "mean") return ReduceOp::kMean;
  return std::nullopt;
}

std::optional<LevelTag> parse_level_tag(std::string_view s) {
  if (s == "L1") return LevelTag::kL1;
  if (s == "L2") return LevelTag::kL2;
  if (s == "L3") return LevelTag::kL3;
  return std::nullopt;
}

std::optional<Provenance> parse_provenance(std::string_view s) {
  if (s == "seed") return Provenance::seed();
  if (s == "transformer-like") return Provenance::transformer_like();
  constexpr std::string_view prefix = "composite(";
  if (s.size() > prefix.size() + 1 && s.substr(0, prefix.size()) == prefix && s.back() == ')') {
    int k = 0;
    auto body = s.substr(prefix.size(), s.size() - prefix.size() - 1);
    auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), k);
    if (ec == std::errc{} && p == body.data() + body.size()) return Provenance::composite(k);
  }
  return std::nullopt;
}

}  // namespace kernelforge
