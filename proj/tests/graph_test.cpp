// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "kernelforge/cost_model.hpp"
#include "kernelforge/graph.hpp"
#include "kernelforge/interpreter.hpp"
#include "kernelforge/task_io.hpp"
#include "test_util.hpp"

namespace kernelforge {
namespace {

using namespace kftest;

OpGraph two_node_graph() {
  OpGraph g;
  g.inputs = {spec({2, 3}), spec({2, 3})};
  g.nodes = {ew("a", ElementwiseOp::kAdd, {"$0", "$1"}), ew("r", ElementwiseOp::kRelu, {"a"})};
  g.outputs = {"r"};
  return g;
}

TEST(Validate, AcceptsWellFormedGraph) { EXPECT_TRUE(validate_graph(two_node_graph()).ok()); }

TEST(Validate, ReportsUnknownReference) {
  auto g = two_node_graph();
  g.nodes[1].inputs = {"missing"};
  const auto v = validate_graph(g);
  ASSERT_FALSE(v.ok());
  EXPECT_EQ(v.violations[0].node_id, "r");
  EXPECT_NE(v.violations[0].message.find("unknown reference"), std::string::npos);
}

TEST(Validate, ReportsCycle) {
  auto g = two_node_graph();
  g.nodes[0].inputs = {"r", "$1"};
  const auto v = validate_graph(g);
  ASSERT_FALSE(v.ok());
  EXPECT_NE(v.to_string().find("cycle"), std::string::npos);
}

TEST(Validate, ReportsTopologicalOrder) {
  OpGraph g;
  g.inputs = {spec({2, 2})};
  g.nodes = {ew("b", ElementwiseOp::kRelu, {"a"}), ew("a", ElementwiseOp::kSigmoid, {"$0"})};
  g.outputs = {"b"};
  EXPECT_NE(validate_graph(g).to_string().find("topological order"), std::string::npos);
}

TEST(Validate, ReportsShapeMismatchAndDuplicates) {
  OpGraph g;
  g.inputs = {spec({2, 3}), spec({3, 2})};
  g.nodes = {ew("a", ElementwiseOp::kAdd, {"$0", "$1"}), ew("a", ElementwiseOp::kRelu, {"$0"})};
  g.outputs = {"a"};
  const auto s = validate_graph(g).to_string();
  EXPECT_NE(s.find("shape mismatch"), std::string::npos);
  EXPECT_NE(s.find("duplicate id"), std::string::npos);
}

TEST(Validate, ElementCapAndEmptyOutputs) {
  OpGraph g;
  g.inputs = {spec({2048, 1024})};
  g.nodes = {ew("r", ElementwiseOp::kRelu, {"$0"})};
  EXPECT_FALSE(validate_graph(g).ok());
  g.inputs = {spec({4})};
  EXPECT_NE(validate_graph(g).to_string().find("no outputs"), std::string::npos);
}

TEST(Shapes, InferenceCoversEveryKind) {
  auto shape = [](const OperatorNode& n, std::vector<Shape> in) { return infer_node_shape(n, in); };
  EXPECT_EQ(*shape(matmul("m", "x", "y"), {{2, 3}, {3, 5}}), (Shape{2, 5}));
  EXPECT_EQ(*shape(matmul("m", "x", "y", true), {{2, 3}, {5, 3}}), (Shape{2, 5}));
  EXPECT_FALSE(shape(matmul("m", "x", "y"), {{2, 3}, {2, 3}}));
  EXPECT_EQ(*shape(diag_matmul("d", "a", "b"), {{4}, {4, 6}}), (Shape{4, 6}));
  EXPECT_EQ(*shape(reduce("r", ReduceOp::kSum, "x", 1, true), {{4, 6}}), (Shape{4, 1}));
  EXPECT_EQ(*shape(reduce("r", ReduceOp::kSum, "x", -1), {{4, 6}}), (Shape{4}));
  EXPECT_EQ(*shape(reduce("r", ReduceOp::kMean, "x", std::nullopt), {{4, 6}}), (Shape{1}));
  EXPECT_EQ(*shape(conv("c", "x", "k"), {{8, 9}, {3, 2}}), (Shape{6, 8}));
  EXPECT_FALSE(shape(conv("c", "x", "k"), {{8, 9}, {8, 2}}));
  EXPECT_EQ(*shape(ew("s", ElementwiseOp::kRowScale, {"v", "x"}), {{4}, {4, 2}}), (Shape{4, 2}));
  EXPECT_FALSE(shape(ew("q", ElementwiseOp::kDivConst, {"x"}, 0.0), {{4}}));
}

TEST(Interpreter, ElementwiseAndReductions) {
  const auto g = two_node_graph();
  Tensor a({2, 3}), b({2, 3});
  a.values() << 1, -2, 3, -4, 5, -6;
  b.values() << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  const auto out = evaluate_reference(g, {a, b});
  ASSERT_EQ(out.size(), 1u);
  Tensor expect({2, 3});
  expect.values() << 1.5, 0, 3.5, 0, 5.5, 0;
  EXPECT_EQ(out[0], expect);

  OpGraph r;
  r.inputs = {spec({2, 3})};
  r.nodes = {reduce("s", ReduceOp::kSum, "$0", 1), reduce("m", ReduceOp::kMean, "$0", 0, true),
             reduce("t", ReduceOp::kSum, "$0", std::nullopt)};
  r.outputs = {"s", "m", "t"};
  const auto o = evaluate_reference(r, {a});
  EXPECT_DOUBLE_EQ(o[0].values()[0], 2.0);
  EXPECT_DOUBLE_EQ(o[0].values()[1], -5.0);
  EXPECT_EQ(o[1].shape(), (Shape{1, 3}));
  EXPECT_DOUBLE_EQ(o[1].values()[0], -1.5);
  EXPECT_DOUBLE_EQ(o[2].values()[0], -3.0);
}

TEST(Interpreter, MatMulDiagRowScaleAndConv) {
  Tensor a({2}), x({2, 2}), k({2, 2});
  a.values() << 2, 3;
  x.values() << 1, 2, 3, 4;
  k.values() << 1, 0, 0, 1;

  OpGraph g;
  g.inputs = {spec({2}), spec({2, 2}), spec({2, 2})};
  g.nodes = {diag_matmul("d", "$0", "$1"), ew("s", ElementwiseOp::kRowScale, {"$0", "$1"}),
             matmul("m", "$1", "$1"), matmul("t", "$1", "$1", true), conv("c", "$1", "$2")};
  g.outputs = {"d", "s", "m", "t", "c"};
  const auto o = evaluate_reference(g, {a, x, k});
  Tensor scaled({2, 2});
  scaled.values() << 2, 4, 9, 12;
  EXPECT_EQ(o[0], scaled);
  EXPECT_EQ(o[1], scaled);
  Tensor mm({2, 2});
  mm.values() << 7, 10, 15, 22;
  EXPECT_EQ(o[2], mm);
  Tensor mt({2, 2});
  mt.values() << 5, 11, 11, 25;
  EXPECT_EQ(o[3], mt);
  EXPECT_EQ(o[4].shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(o[4].values()[0], 5.0);
}

TEST(Interpreter, NonFiniteIsReportedWithNode) {
  OpGraph g;
  g.inputs = {spec({2})};
  g.nodes = {scale("big", "$0", 1e308), scale("inf", "big", 1e308)};
  g.outputs = {"inf"};
  Tensor x({2});
  x.values() << 1, 1;
  try {
    evaluate_reference(g, {x});
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.node_id(), "inf");
  }
}

TEST(Inputs, DeterministicPerSeedAndDistinctAcrossSeeds) {
  const auto t = make_task("t", two_node_graph());
  EXPECT_EQ(generate_inputs(t, 5), generate_inputs(t, 5));
  EXPECT_NE(generate_inputs(t, 5)[0], generate_inputs(t, 6)[0]);
  auto u = t;
  u.graph.inputs[1].seedable = false;
  EXPECT_EQ(generate_inputs(u, 1)[1], Tensor::filled({2, 3}, 1.0));
}

TEST(TaskIo, RoundTripsThroughJsonAndDisk) {
  auto t = make_task("roundtrip", two_node_graph(), LevelTag::kL2, 42);
  t.provenance = Provenance::composite(3);
  t.graph.nodes.push_back(reduce("s", ReduceOp::kMean, "r", -1, true));
  t.graph.outputs = {"s"};
  EXPECT_EQ(task_from_json(task_to_json(t)), t);

  TempDir dir("taskio");
  save_task(t, dir.path() / "a.json");
  EXPECT_EQ(load_task(dir.path() / "a.json"), t);
  const auto all = load_task_dir(dir.path());
  ASSERT_EQ(all.size(), 1u);
  EXPECT_EQ(all[0].task_id, "roundtrip");
}

TEST(TaskIo, RejectsMalformedInput) {
  EXPECT_THROW(task_from_json(nlohmann::json{{"nodes", nlohmann::json::array()}}), DataError);
  auto j = task_to_json(make_task("x", two_node_graph()));
  j["nodes"][0]["kind"] = "teleport";
  EXPECT_THROW(task_from_json(j), DataError);
  j = task_to_json(make_task("x", two_node_graph()));
  j["level_tag"] = "L9";
  EXPECT_THROW(task_from_json(j), DataError);
}

TEST(CostModel, DiagMatMulEagerPaysForMaterialization) {
  const auto t = diag_matmul_task();
  CostModelParams p;
  const auto eager = cost_eager(t.graph, p);
  // 2 n^2 m flops plus the materialized n x n diagonal.
  const double n = 512;
  const double flops_ms = 2 * n * n * n / p.flops_per_second * 1e3;
  EXPECT_GT(eager, flops_ms);
  EXPECT_LE(cost_compiled(t.graph, p), eager);
}

TEST(CostModel, FusionSavesLaunchesAndTraffic) {
  const auto g = two_node_graph();
  CostModelParams p;
  EXPECT_LT(cost_compiled(g, p), cost_eager(g, p));
  EXPECT_TRUE(is_valid_partition(g, maximal_fusion(g)));
  std::string why;
  EXPECT_FALSE(is_valid_partition(g, {{"a"}, {"a", "r"}}, &why));
  EXPECT_NE(why.find("overlapping"), std::string::npos);
  EXPECT_FALSE(is_valid_partition(g, {{"a"}}, &why));
}

TEST(CostModel, CompiledNeverSlowerOnRandomGraphs) {
  std::mt19937_64 rng(11);
  CostModelParams p;
  for (int i = 0; i < 300; ++i) {
    const auto g = random_graph(rng);
    ASSERT_TRUE(validate_graph(g).ok()) << validate_graph(g).to_string();
    EXPECT_LE(cost_compiled(g, p), cost_eager(g, p) * (1 + 1e-12));
    EXPECT_TRUE(is_valid_partition(g, greedy_elementwise_fusion(g)));
    EXPECT_TRUE(is_valid_partition(g, maximal_fusion(g)));
  }
}

TEST(CostModel, ParamsValidate) {
  CostModelParams p;
  p.noise_relative_sigma = 0.2;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.bytes_per_second = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace kernelforge
