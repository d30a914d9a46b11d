// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernelforge/task_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace kernelforge {

using nlohmann::json;

namespace {

template <typename T>
T require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw DataError(std::string("missing field '") + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

json node_to_json(const OperatorNode& node) {
  json params = json::object();
  const auto& p = node.params;
  switch (node.kind) {
    case NodeKind::kElementwise:
      params["op"] = to_string(p.elementwise);
      if (p.elementwise == ElementwiseOp::kDivConst) params["constant"] = p.constant;
      break;
    case NodeKind::kReduction:
      params["op"] = to_string(p.reduce);
      params["axis"] = p.axis ? json(*p.axis) : json(nullptr);
      params["keepdim"] = p.keepdim;
      break;
    case NodeKind::kScale:
      params["constant"] = p.constant;
      break;
    case NodeKind::kMatMul:
      params["transpose_b"] = p.transpose_b;
      break;
    case NodeKind::kDiagMatMul:
    case NodeKind::kConv:
      break;
  }
  return json{{"id", node.id},
              {"kind", to_string(node.kind)},
              {"inputs", node.inputs},
              {"params", params}};
}

OperatorNode node_from_json(const json& j) {
  OperatorNode node;
  node.id = require<std::string>(j, "id");
  auto kind = parse_node_kind(require<std::string>(j, "kind"));
  if (!kind) throw DataError("node " + node.id + ": unknown kind");
  node.kind = *kind;
  node.inputs = require<std::vector<std::string>>(j, "inputs");
  const json params = j.value("params", json::object());
  auto& p = node.params;
  try {
    switch (node.kind) {
      case NodeKind::kElementwise: {
        auto op = parse_elementwise_op(params.at("op").get<std::string>());
        if (!op) throw DataError("node " + node.id + ": unknown elementwise op");
        p.elementwise = *op;
        if (*op == ElementwiseOp::kDivConst) p.constant = params.at("constant").get<double>();
        break;
      }
      case NodeKind::kReduction: {
        auto op = parse_reduce_op(params.at("op").get<std::string>());
        if (!op) throw DataError("node " + node.id + ": unknown reduction op");
        p.reduce = *op;
        if (params.contains("axis") && !params["axis"].is_null()) {
          p.axis = params["axis"].get<std::int64_t>();
        }
        p.keepdim = params.value("keepdim", false);
        break;
      }
      case NodeKind::kScale:
        p.constant = params.at("constant").get<double>();
        break;
      case NodeKind::kMatMul:
        p.transpose_b = params.value("transpose_b", false);
        break;
      case NodeKind::kDiagMatMul:
      case NodeKind::kConv:
        break;
    }
  } catch (const json::exception& e) {
    throw DataError("node " + node.id + " params: " + e.what());
  }
  return node;
}

json graph_to_json(const OpGraph& graph) {
  json inputs = json::array();
  for (const auto& spec : graph.inputs) {
    json s{{"shape", spec.shape}, {"dtype", "f32"}};
    if (!spec.seedable) s["seedable"] = false;
    inputs.push_back(std::move(s));
  }
  json nodes = json::array();
  for (const auto& n : graph.nodes) nodes.push_back(node_to_json(n));
  return json{{"inputs", inputs}, {"nodes", nodes}, {"outputs", graph.outputs}};
}

OpGraph graph_from_json(const json& j) {
  OpGraph g;
  for (const auto& s : require<json>(j, "inputs")) {
    TensorSpec spec;
    spec.shape = require<Shape>(s, "shape");
    const auto dtype = s.value("dtype", std::string("f32"));
    if (dtype != "f32") throw DataError("unsupported dtype " + dtype);
    spec.seedable = s.value("seedable", true);
    g.inputs.push_back(std::move(spec));
  }
  for (const auto& n : require<json>(j, "nodes")) g.nodes.push_back(node_from_json(n));
  g.outputs = require<std::vector<std::string>>(j, "outputs");
  return g;
}

json task_to_json(const OperatorTask& task) {
  json j = graph_to_json(task.graph);
  j["task_id"] = task.task_id;
  j["provenance"] = to_string(task.provenance);
  j["level_tag"] = task.level_tag ? json(std::string(to_string(*task.level_tag))) : json(nullptr);
  j["input_seed_domain"] = {
      {"distribution", task.input_policy.distribution == InputDistribution::kStandardNormal
                           ? "standard_normal"
                           : "uniform"},
      {"base_seed", task.input_policy.base_seed}};
  return j;
}

OperatorTask task_from_json(const json& j) {
  OperatorTask task;
  task.task_id = require<std::string>(j, "task_id");
  task.graph = graph_from_json(j);
  auto prov = parse_provenance(j.value("provenance", std::string("seed")));
  if (!prov) throw DataError("task " + task.task_id + ": bad provenance");
  task.provenance = *prov;
  if (j.contains("level_tag") && !j["level_tag"].is_null()) {
    auto level = parse_level_tag(j["level_tag"].get<std::string>());
    if (!level) throw DataError("task " + task.task_id + ": bad level_tag");
    task.level_tag = level;
  }
  if (j.contains("input_seed_domain")) {
    const auto& d = j["input_seed_domain"];
    const auto dist = d.value("distribution", std::string("standard_normal"));
    if (dist == "standard_normal") {
      task.input_policy.distribution = InputDistribution::kStandardNormal;
    } else if (dist == "uniform") {
      task.input_policy.distribution = InputDistribution::kUniform;
    } else {
      throw DataError("task " + task.task_id + ": unknown distribution " + dist);
    }
    task.input_policy.base_seed = d.value("base_seed", std::uint64_t{0});
  }
  return task;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw DataError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

OperatorTask load_task(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return task_from_json(j);
}

void save_task(const OperatorTask& task, const std::filesystem::path& path) {
  write_text_file_atomic(path, task_to_json(task).dump(2) + "\n");
}

std::vector<OperatorTask> load_task_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json" &&
        e.path().filename() != "manifest.json") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<OperatorTask> tasks;
  for (const auto& f : files) tasks.push_back(load_task(f));
  return tasks;
}

json tensor_to_json(const Tensor& t) {
  std::vector<double> v(t.values().data(), t.values().data() + t.size());
  return json{{"shape", t.shape()}, {"values", v}};
}

Tensor tensor_from_json(const json& j) {
  auto shape = require<Shape>(j, "shape");
  auto v = require<std::vector<double>>(j, "values");
  Tensor::Values values = Eigen::Map<Tensor::Values>(v.data(), static_cast<Eigen::Index>(v.size()));
  try {
    return Tensor(std::move(shape), std::move(values));
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

}  // namespace kernelforge
