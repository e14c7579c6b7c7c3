// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "isq/graph.hpp"
#include "isq/json.hpp"
#include "isq/quantizer.hpp"
#include "isq/squant.hpp"

namespace isq {

enum class Rounding { Nearest, Squant };
const char* to_string(Rounding r);
Rounding rounding_from_string(const std::string& s);

struct QuantConfig {
  int bits = 8;
  QuantScheme scheme = QuantScheme::Scale;
  Granularity granularity = Granularity::PerTensor;
  Rounding rounding = Rounding::Squant;
  int calib_batches = 32;
  int calib_batch_size = 16;
  std::uint64_t seed = 0;
  bool allow_degenerate = false;

  Json to_json() const;
  static QuantConfig from_json(const Json& j);
  friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

struct QuantizedLayer {
  TensorQ weight;
  QuantParams weight_params;
  /// round(b * s_w * s_x) per output channel.
  std::vector<std::int32_t> bias;
  CalibReport report;
  /// report.summary_json(false); kept separately so a loaded model still
  /// carries the statistics of the run that produced it.
  Json summary;
};

/// A BN-free graph with int weights, int32 biases and the output grid of
/// every node (plus "input"). Conv/fc/add nodes whose only reader is a relu
/// take the relu's unsigned grid; relu, pooling and flatten keep their
/// input's grid.
struct QuantizedGraph {
  Graph graph;
  QuantConfig config;
  std::map<std::string, QuantizedLayer> layers;
  std::map<std::string, QuantParams> activations;

  const QuantParams& grid(const std::string& id) const;
  const QuantizedLayer& layer(const std::string& id) const;
};

/// Quantizes a folded graph. Activation params come from
/// calibrate_activations unless supplied.
QuantizedGraph quantize_graph(const Graph& folded, const QuantConfig& config);
QuantizedGraph quantize_graph(const Graph& folded, const QuantConfig& config,
                              const std::map<std::string, QuantParams>& activation_params);

Json params_to_json(const QuantParams& p);
QuantParams params_from_json(const Json& j);

/// Graph manifest extended with a "quantization" section and int8/int32 blobs.
void save_quantized(const QuantizedGraph& qg, const std::filesystem::path& manifest);
QuantizedGraph load_quantized(const std::filesystem::path& manifest);
bool is_quantized_manifest(const std::filesystem::path& manifest);

}  // namespace isq
