// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "isq/graph.hpp"
#include "isq/json.hpp"

namespace isq {

/// Reads a manifest and its sibling blobs into a validated Graph.
Graph load_model(const std::filesystem::path& manifest);

/// Writes `<dir>/<file name of manifest>` plus one blob per parameter next to it.
void save_model(const Graph& graph, const std::filesystem::path& manifest);

// Building blocks shared with the quantized-model manifest.
Graph graph_from_json(const Json& doc, const std::filesystem::path& blob_dir);
/// Serializes the graph and writes its float parameter blobs into `blob_dir`.
Json graph_to_json(const Graph& graph, const std::filesystem::path& blob_dir);
Json parse_json(const std::string& text, const std::filesystem::path& origin);
std::string dump_json(const Json& doc);
/// Blob file name used for a parameter tensor.
std::string blob_file_name(const std::string& tensor_name);

}  // namespace isq
