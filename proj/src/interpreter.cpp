// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/interpreter.hpp"

#include <array>
#include <map>
#include <random>

namespace kernelforge {

namespace {

using Matrix = Tensor::RowMajorMatrix;

Tensor reduce(const Tensor& x, const NodeParams& p, const Shape& out_shape) {
  const bool mean = p.reduce == ReduceOp::kMean;
  if (!p.axis) {
    const double s = x.values().sum();
    return Tensor::filled(out_shape, mean ? s / static_cast<double>(x.size()) : s);
  }
  const auto& shape = x.shape();
  auto axis = *p.axis;
  if (axis < 0) axis += static_cast<std::int64_t>(shape.size());
  // View as [outer, extent, inner] and reduce the middle dimension.
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
  const auto extent = shape[static_cast<std::size_t>(axis)];
  Tensor out(out_shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    Eigen::Map<const Matrix> slab(x.values().data() + o * extent * inner, extent, inner);
    Eigen::RowVectorXd s = slab.colwise().sum();
    if (mean) s /= static_cast<double>(extent);
    out.values().segment(o * inner, inner) = s.transpose().array();
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Shape& out_shape) {
  const auto xm = x.matrix();
  const auto km = k.matrix();
  Tensor out(out_shape);
  auto om = out.matrix();
  for (Eigen::Index i = 0; i < om.rows(); ++i) {
    for (Eigen::Index j = 0; j < om.cols(); ++j) {
      om(i, j) = (xm.block(i, j, km.rows(), km.cols()).array() * km.array()).sum();
    }
  }
  return out;
}

}  // namespace

Tensor evaluate_node(const OperatorNode& node, const std::vector<const Tensor*>& in) {
  std::vector<Shape> shapes;
  for (const auto* t : in) shapes.push_back(t->shape());
  std::string why;
  auto out_shape = infer_node_shape(node, shapes, &why);
  if (!out_shape) throw std::invalid_argument(node.id + ": " + why);
  const auto& p = node.params;

  switch (node.kind) {
    case NodeKind::kElementwise: {
      const auto& a = in[0]->values();
      switch (p.elementwise) {
        case ElementwiseOp::kAdd:
          return Tensor(*out_shape, a + in[1]->values());
        case ElementwiseOp::kMul:
          return Tensor(*out_shape, a * in[1]->values());
        case ElementwiseOp::kAddRelu:
          return Tensor(*out_shape, (a + in[1]->values()).max(0.0));
        case ElementwiseOp::kRelu:
          return Tensor(*out_shape, a.max(0.0));
        case ElementwiseOp::kSigmoid:
          return Tensor(*out_shape, (1.0 + (-a).exp()).inverse());
        case ElementwiseOp::kDivConst:
          return Tensor(*out_shape, a / p.constant);
        case ElementwiseOp::kRowScale: {
          Tensor out(*out_shape);
          out.matrix() = in[0]->values().matrix().asDiagonal() * in[1]->matrix();
          return out;
        }
      }
      break;
    }
    case NodeKind::kScale:
      return Tensor(*out_shape, in[0]->values() * p.constant);
    case NodeKind::kMatMul: {
      Tensor out(*out_shape);
      if (p.transpose_b) {
        out.matrix().noalias() = in[0]->matrix() * in[1]->matrix().transpose();
      } else {
        out.matrix().noalias() = in[0]->matrix() * in[1]->matrix();
      }
      return out;
    }
    case NodeKind::kDiagMatMul: {
      // Materialize the diagonal explicitly, as the eager path does.
      const Matrix diag = in[0]->values().matrix().asDiagonal();
      Tensor out(*out_shape);
      out.matrix().noalias() = diag * in[1]->matrix();
      return out;
    }
    case NodeKind::kReduction:
      return reduce(*in[0], p, *out_shape);
    case NodeKind::kConv:
      return conv2d(*in[0], *in[1], *out_shape);
  }
  throw std::logic_error("unhandled node kind");
}

std::vector<Tensor> evaluate_reference(const OpGraph& graph, const std::vector<Tensor>& inputs) {
  if (inputs.size() != graph.inputs.size()) {
    throw std::invalid_argument("expected " + std::to_string(graph.inputs.size()) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
  std::map<std::string, Tensor> env;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].shape() != graph.inputs[i].shape) {
      throw std::invalid_argument("input " + input_ref(i) + " has shape " +
                                  shape_to_string(inputs[i].shape()) + ", expected " +
                                  shape_to_string(graph.inputs[i].shape));
    }
    env.emplace(input_ref(i), inputs[i]);
  }
  for (const auto& node : graph.nodes) {
    std::vector<const Tensor*> operands;
    for (const auto& r : node.inputs) {
      auto it = env.find(r);
      if (it == env.end()) throw std::invalid_argument(node.id + ": unresolved reference " + r);
      operands.push_back(&it->second);
    }
    Tensor out = evaluate_node(node, operands);
    if (!out.all_finite()) throw NonFiniteError(node.id);
    env.insert_or_assign(node.id, std::move(out));
  }
  std::vector<Tensor> outputs;
  for (const auto& o : graph.outputs) {
    auto it = env.find(o);
    if (it == env.end()) throw std::invalid_argument("unresolved output " + o);
    outputs.push_back(it->second);
  }
  return outputs;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6b66u};
  std::array<std::uint32_t, 2> words{};
  seq.generate(words.begin(), words.end());
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<Tensor> generate_inputs(const OperatorTask& task, std::uint64_t seed,
                                    std::int64_t element_cap) {
  std::vector<Tensor> out;
  out.reserve(task.graph.inputs.size());
  for (std::size_t i = 0; i < task.graph.inputs.size(); ++i) {
    const auto& spec = task.graph.inputs[i];
    if (numel(spec.shape) > element_cap) {
      throw std::length_error("input " + input_ref(i) + " " + shape_to_string(spec.shape) +
                              " exceeds element cap " + std::to_string(element_cap));
    }
    Tensor t(spec.shape);
    if (spec.seedable) {
      std::mt19937_64 rng(derive_seed(seed, i));
      if (task.input_policy.distribution == InputDistribution::kStandardNormal) {
        std::normal_distribution<double> dist(0.0, 1.0);
        for (auto& v : t.values()) v = dist(rng);
      } else {
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (auto& v : t.values()) v = dist(rng);
      }
    } else {
      t.values().setOnes();
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace kernelforge
