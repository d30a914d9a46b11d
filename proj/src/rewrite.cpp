// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/rewrite.hpp"

#include <algorithm>
#include <deque>
#include <set>

#include "kernelforge/task_io.hpp"

namespace kernelforge {

using nlohmann::json;

std::string_view to_string(RewriteRule rule) {
  switch (rule) {
    case RewriteRule::kDiagMatMulToRowScale: return "diag_matmul_to_row_scale";
    case RewriteRule::kMatMulSumToSumDot: return "matmul_sum_to_sum_dot";
    case RewriteRule::kFuseAddRelu: return "fuse_add_relu";
    case RewriteRule::kFoldScaleChain: return "fold_scale_chain";
  }
  return "?";
}

std::optional<RewriteRule> parse_rewrite_rule(std::string_view s) {
  for (auto r : kAllRewriteRules) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

namespace {

bool is_scale_like(const OperatorNode& n) {
  return n.kind == NodeKind::kScale ||
         (n.kind == NodeKind::kElementwise && n.params.elementwise == ElementwiseOp::kDivConst);
}

double scale_factor(const OperatorNode& n) {
  return n.kind == NodeKind::kScale ? n.params.constant : 1.0 / n.params.constant;
}

bool is_elementwise(const OperatorNode& n, ElementwiseOp op) {
  return n.kind == NodeKind::kElementwise && n.params.elementwise == op;
}

const OperatorNode* producer(const OpGraph& g, const std::string& ref) {
  auto i = find_node(g, ref);
  return i ? &g.nodes[*i] : nullptr;
}

std::string fresh_id(const OpGraph& g, const std::string& base) {
  std::set<std::string> taken;
  for (const auto& n : g.nodes) taken.insert(n.id);
  if (!taken.count(base)) return base;
  for (int i = 1;; ++i) {
    auto candidate = base + "_" + std::to_string(i);
    if (!taken.count(candidate)) return candidate;
  }
}

// Replaces the nodes named in `removed` by `replacement`, emitted at the
// position of `anchor`.
OpGraph splice(const OpGraph& g, const std::set<std::string>& removed, const std::string& anchor,
               const std::vector<OperatorNode>& replacement) {
  OpGraph out;
  out.inputs = g.inputs;
  out.outputs = g.outputs;
  for (const auto& n : g.nodes) {
    if (n.id == anchor) {
      out.nodes.insert(out.nodes.end(), replacement.begin(), replacement.end());
    } else if (!removed.count(n.id)) {
      out.nodes.push_back(n);
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<std::string>> find_matches(const OpGraph& g, RewriteRule rule) {
  std::vector<std::vector<std::string>> matches;
  const auto uses = use_counts(g);
  auto single_use = [&](const std::string& id) {
    auto it = uses.find(id);
    return it != uses.end() && it->second == 1;
  };
  for (const auto& n : g.nodes) {
    switch (rule) {
      case RewriteRule::kDiagMatMulToRowScale:
        if (n.kind == NodeKind::kDiagMatMul) matches.push_back({n.id});
        break;
      case RewriteRule::kFuseAddRelu:
        if (is_elementwise(n, ElementwiseOp::kRelu)) {
          const auto* a = producer(g, n.inputs[0]);
          if (a && is_elementwise(*a, ElementwiseOp::kAdd) && single_use(a->id)) {
            matches.push_back({a->id, n.id});
          }
        }
        break;
      case RewriteRule::kFoldScaleChain:
        if (is_scale_like(n)) {
          const auto* s1 = producer(g, n.inputs[0]);
          if (s1 && is_scale_like(*s1) && single_use(s1->id)) matches.push_back({s1->id, n.id});
        }
        break;
      case RewriteRule::kMatMulSumToSumDot: {
        if (n.kind != NodeKind::kReduction || n.params.reduce != ReduceOp::kSum || !n.params.axis) {
          break;
        }
        const auto axis = *n.params.axis;
        if (axis != 1 && axis != -1) break;
        std::deque<std::string> chain;
        const OperatorNode* cur = producer(g, n.inputs[0]);
        while (cur && is_scale_like(*cur) && single_use(cur->id)) {
          chain.push_front(cur->id);
          cur = producer(g, cur->inputs[0]);
        }
        if (cur && cur->kind == NodeKind::kMatMul && single_use(cur->id)) {
          std::vector<std::string> binding{cur->id};
          binding.insert(binding.end(), chain.begin(), chain.end());
          binding.push_back(n.id);
          matches.push_back(std::move(binding));
        }
        break;
      }
    }
  }
  return matches;
}

std::optional<std::string> match_error(const OpGraph& g, const RewriteApplication& app) {
  if (app.binding.empty()) return "pattern mismatch: empty binding";
  for (const auto& m : find_matches(g, app.rule)) {
    if (m == app.binding) return std::nullopt;
  }
  std::string ids;
  for (const auto& b : app.binding) ids += (ids.empty() ? "" : ",") + b;
  return "pattern mismatch: " + std::string(to_string(app.rule)) + " does not match [" + ids + "]";
}

OpGraph apply_rewrite(const OpGraph& g, const RewriteApplication& app) {
  if (auto err = match_error(g, app)) throw RewriteError(*err);
  const auto& b = app.binding;
  switch (app.rule) {
    case RewriteRule::kDiagMatMulToRowScale: {
      OpGraph out = g;
      auto& node = out.nodes[*find_node(out, b[0])];
      node.kind = NodeKind::kElementwise;
      node.params = NodeParams{};
      node.params.elementwise = ElementwiseOp::kRowScale;
      return out;
    }
    case RewriteRule::kFuseAddRelu: {
      const auto& add = g.nodes[*find_node(g, b[0])];
      OperatorNode fused{b[1], NodeKind::kElementwise, add.inputs, {}};
      fused.params.elementwise = ElementwiseOp::kAddRelu;
      return splice(g, {b[0]}, b[1], {fused});
    }
    case RewriteRule::kFoldScaleChain: {
      const auto& s1 = g.nodes[*find_node(g, b[0])];
      const auto& s2 = g.nodes[*find_node(g, b[1])];
      OperatorNode folded{b[1], NodeKind::kScale, s1.inputs, {}};
      folded.params.constant = scale_factor(s1) * scale_factor(s2);
      return splice(g, {b[0]}, b[1], {folded});
    }
    case RewriteRule::kMatMulSumToSumDot: {
      const auto& mm = g.nodes[*find_node(g, b.front())];
      const auto& red = g.nodes[*find_node(g, b.back())];
      const auto& x = mm.inputs[0];
      const auto& w = mm.inputs[1];
      std::vector<OperatorNode> repl;

      // Column sum of W^T (row sum of W when not transposed), kept 2-D.
      OperatorNode wsum{fresh_id(g, red.id + "_wsum"), NodeKind::kReduction, {w}, {}};
      wsum.params.reduce = ReduceOp::kSum;
      wsum.params.axis = mm.params.transpose_b ? 0 : 1;
      wsum.params.keepdim = true;
      repl.push_back(wsum);

      OperatorNode dot{fresh_id(g, red.id + "_dot"), NodeKind::kMatMul, {x, wsum.id}, {}};
      dot.params.transpose_b = mm.params.transpose_b;
      repl.push_back(dot);

      // Scalar-linear stages commute with the row sum; replay them on [N, 1].
      for (std::size_t i = 1; i + 1 < b.size(); ++i) {
        OperatorNode c = g.nodes[*find_node(g, b[i])];
        c.inputs = {repl.back().id};
        repl.push_back(std::move(c));
      }
      if (!red.params.keepdim) {
        // Summing a single column drops the kept axis.
        OperatorNode squeeze{red.id, NodeKind::kReduction, {repl.back().id}, {}};
        squeeze.params.reduce = ReduceOp::kSum;
        squeeze.params.axis = 1;
        squeeze.params.keepdim = false;
        repl.push_back(squeeze);
      } else {
        repl.back().id = red.id;
      }
      std::set<std::string> removed(b.begin(), b.end() - 1);
      return splice(g, removed, red.id, repl);
    }
  }
  throw RewriteError("unknown rewrite rule");
}

AppliedCandidate apply_candidate(const KernelCandidate& candidate, const OpGraph& graph) {
  if (auto v = validate_graph(graph); !v.ok()) {
    throw RewriteError("graph does not validate:\n" + v.to_string());
  }
  AppliedCandidate applied;
  applied.graph = graph;
  for (const auto& app : candidate.rewrites) applied.graph = apply_rewrite(applied.graph, app);
  if (auto v = validate_graph(applied.graph); !v.ok()) {
    throw RewriteError("rewritten graph does not validate:\n" + v.to_string());
  }
  applied.partition =
      candidate.partition.empty() ? singleton_partition(applied.graph) : candidate.partition;
  std::string why;
  if (!is_valid_partition(applied.graph, applied.partition, &why)) throw RewriteError(why);
  for (const auto& f : candidate.faults) {
    if (!find_node(applied.graph, f.node_id)) {
      throw RewriteError("fault names unknown node " + f.node_id);
    }
  }
  applied.faults = candidate.faults;
  return applied;
}

json candidate_to_json(const KernelCandidate& c) {
  json rewrites = json::array();
  for (const auto& r : c.rewrites) {
    rewrites.push_back({{"rule", to_string(r.rule)}, {"binding", r.binding}});
  }
  json faults = json::array();
  for (const auto& f : c.faults) {
    faults.push_back({{"node", f.node_id},
                      {"kind", f.kind == InjectedFault::Kind::kScaleOutput ? "scale_output"
                                                                           : "constant_output"},
                      {"value", f.value}});
  }
  return json{{"rewrites", rewrites},
              {"partition", c.partition},
              {"faults", faults},
              {"claimed_source_digest", c.claimed_source_digest}};
}

KernelCandidate candidate_from_json(const json& j) {
  if (!j.is_object()) throw DataError("candidate must be an object");
  KernelCandidate c;
  try {
    for (const auto& r : j.value("rewrites", json::array())) {
      auto rule = parse_rewrite_rule(r.at("rule").get<std::string>());
      if (!rule) throw DataError("rewrite rule not in whitelist: " + r.at("rule").get<std::string>());
      c.rewrites.push_back({*rule, r.at("binding").get<std::vector<std::string>>()});
    }
    c.partition = j.value("partition", Partition{});
    for (const auto& f : j.value("faults", json::array())) {
      InjectedFault fault;
      fault.node_id = f.at("node").get<std::string>();
      const auto kind = f.at("kind").get<std::string>();
      if (kind == "scale_output") {
        fault.kind = InjectedFault::Kind::kScaleOutput;
      } else if (kind == "constant_output") {
        fault.kind = InjectedFault::Kind::kConstantOutput;
      } else {
        throw DataError("unknown fault kind " + kind);
      }
      fault.value = f.at("value").get<double>();
      c.faults.push_back(std::move(fault));
    }
    c.claimed_source_digest = j.value("claimed_source_digest", std::string());
  } catch (const json::exception& e) {
    throw DataError(std::string("candidate: ") + e.what());
  }
  return c;
}

}  // namespace kernelforge
