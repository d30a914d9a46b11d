// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kernelforge/graph.hpp"
#include "kernelforge/tensor.hpp"

namespace kernelforge {

/// Malformed or schema-invalid input data (task files, catalogs, logs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Task file schema:
//   {task_id, inputs: [{shape, dtype}], nodes: [{id, kind, inputs, params}],
//    outputs, provenance, level_tag}
// plus the optional `input_seed_domain` {distribution, base_seed}.

nlohmann::json node_to_json(const OperatorNode& node);
OperatorNode node_from_json(const nlohmann::json& j);

nlohmann::json graph_to_json(const OpGraph& graph);  // {inputs, nodes, outputs}
OpGraph graph_from_json(const nlohmann::json& j);

nlohmann::json task_to_json(const OperatorTask& task);
OperatorTask task_from_json(const nlohmann::json& j);

OperatorTask load_task(const std::filesystem::path& path);
void save_task(const OperatorTask& task, const std::filesystem::path& path);

/// Every `*.json` task file in a directory except manifest.json, ordered by
/// file name.
std::vector<OperatorTask> load_task_dir(const std::filesystem::path& dir);

nlohmann::json tensor_to_json(const Tensor& t);  // {shape, values}
Tensor tensor_from_json(const nlohmann::json& j);

/// Reads a whole file; throws DataError when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace kernelforge
