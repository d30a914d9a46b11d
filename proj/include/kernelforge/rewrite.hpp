// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kernelforge/cost_model.hpp"
#include "kernelforge/graph.hpp"

namespace kernelforge {

class RewriteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Closed whitelist of algebraic rewrites. Bindings name the matched nodes:
//
//   diag_matmul_to_row_scale  [d]            diag(a) . B      -> row_scale(a, B)
//   matmul_sum_to_sum_dot     [m, c..., r]   sum_j((x . W^T) * c...)
//                                            -> (x . (sum_rows W)^T) * c...
//   fuse_add_relu             [a, r]         relu(add(x, y))  -> add_relu(x, y)
//   fold_scale_chain          [s1, s2]       s2(s1(x))        -> scale(c1 * c2)
//
// Every matched node except the last must have exactly one consumer. The
// node replacing the match keeps the id of the last matched node, so
// downstream references stay valid.
enum class RewriteRule { kDiagMatMulToRowScale, kMatMulSumToSumDot, kFuseAddRelu, kFoldScaleChain };

inline constexpr RewriteRule kAllRewriteRules[] = {
    RewriteRule::kDiagMatMulToRowScale, RewriteRule::kMatMulSumToSumDot,
    RewriteRule::kFuseAddRelu, RewriteRule::kFoldScaleChain};

std::string_view to_string(RewriteRule rule);
std::optional<RewriteRule> parse_rewrite_rule(std::string_view s);

struct RewriteApplication {
  RewriteRule rule = RewriteRule::kDiagMatMulToRowScale;
  std::vector<std::string> binding;

  friend bool operator==(const RewriteApplication&, const RewriteApplication&) = default;
};

/// All bindings at which `rule` currently matches, in topological order of
/// the anchoring node.
std::vector<std::vector<std::string>> find_matches(const OpGraph& graph, RewriteRule rule);

/// Why `app` does not match `graph`, or nullopt when it does.
std::optional<std::string> match_error(const OpGraph& graph, const RewriteApplication& app);

/// Throws RewriteError on pattern mismatch.
OpGraph apply_rewrite(const OpGraph& graph, const RewriteApplication& app);

/// A deliberately wrong kernel output, modelling an implementation bug in
/// agent-written code. Applied to the named node's result during candidate
/// interpretation.
struct InjectedFault {
  enum class Kind { kScaleOutput, kConstantOutput };
  std::string node_id;
  Kind kind = Kind::kScaleOutput;
  double value = 1.0;

  friend bool operator==(const InjectedFault&, const InjectedFault&) = default;
};

/// The agent's proposed implementation: whitelisted rewrites applied in
/// order, then a kernel partition over the rewritten graph (empty = one
/// kernel per node).
struct KernelCandidate {
  std::vector<RewriteApplication> rewrites;
  Partition partition;
  std::vector<InjectedFault> faults;
  std::string claimed_source_digest;

  friend bool operator==(const KernelCandidate&, const KernelCandidate&) = default;
};

struct AppliedCandidate {
  OpGraph graph;
  Partition partition;
  std::vector<InjectedFault> faults;
};

/// Rewrites then partition. Throws RewriteError on pattern mismatch, invalid
/// partition (e.g. overlapping groups) or a fault naming an unknown node.
AppliedCandidate apply_candidate(const KernelCandidate& candidate, const OpGraph& graph);

nlohmann::json candidate_to_json(const KernelCandidate& c);
KernelCandidate candidate_from_json(const nlohmann::json& j);

}  // namespace kernelforge
