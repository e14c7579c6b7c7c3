// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isq/dataset.hpp"
#include "isq/engine.hpp"
#include "isq/json.hpp"
#include "isq/quantized_graph.hpp"

namespace isq {

struct ErrorNorms {
  float linf = 0.0f;
  float l2 = 0.0f;
  float mean_abs = 0.0f;

  friend bool operator==(const ErrorNorms&, const ErrorNorms&) = default;
};

/// Norms of a - b, accumulated in double.
ErrorNorms error_norms(const TensorF& a, const TensorF& b);

/// Index of the largest logit per row; the lowest index wins ties.
std::vector<std::int32_t> argmax_rows(const TensorF& logits);

/// Percentage of predictions equal to labels.
float top1_accuracy(const std::vector<std::int32_t>& predictions, const std::vector<std::int32_t>& labels);

struct PathResult {
  ExecPath path = ExecPath::Float;
  std::optional<float> accuracy;  // only for labeled datasets
  std::vector<std::int32_t> predictions;

  friend bool operator==(const PathResult&, const PathResult&) = default;
};

struct PathComparison {
  std::string name;  // "<path>-vs-<path>"
  ErrorNorms norms;
  std::int64_t prediction_mismatches = 0;
  bool bit_exact = false;

  friend bool operator==(const PathComparison&, const PathComparison&) = default;
};

/// Self-describing evaluation result. Numbers are stored at the precision
/// they are serialized with, so to_json/from_json round-trips exactly.
struct EvalReport {
  std::string model;
  std::optional<QuantConfig> config;  // absent for float-only runs
  std::int64_t samples = 0;
  std::vector<PathResult> paths;
  std::vector<PathComparison> comparisons;
  Json layers = Json::array();  // CalibReport summaries
  Json op_counts = Json::array();
  std::optional<float> calibration_ms;  // only when timing is requested

  const PathResult* find(ExecPath p) const;
  Json to_json() const;
  static EvalReport from_json(const Json& j);
  /// Aligned text table: model, path, bits, baseline, quantized, delta.
  std::string table() const;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EvalOptions {
  std::vector<ExecPath> paths{ExecPath::Float, ExecPath::FakeQuant, ExecPath::IntSymmetric};
  std::int64_t batch_size = 64;
  bool timing = false;
};

/// Runs the requested paths over the dataset and compares every quantized
/// path with float (and fake with int when both run).
EvalReport evaluate(const QuantizedGraph& qg, const Dataset& data, const EvalOptions& opts = {});

/// Float-only evaluation: the baseline row alone.
EvalReport evaluate_float(const Graph& graph, const Dataset& data, std::int64_t batch_size = 64);

struct CompareRow {
  int bits = 8;
  Rounding rounding = Rounding::Nearest;
  std::optional<float> baseline;
  std::optional<float> quantized;
  std::optional<float> delta;  // quantized - baseline
  float max_kernel_ase = 0.0f;             // all kernels, CQ-adjusted included
  float max_unadjusted_kernel_ase = 0.0f;  // kernels CQ did not touch
  float mean_kernel_ase = 0.0f;
  float max_channel_ase = 0.0f;
  ErrorNorms output_error;  // fake-quant vs float logits

  friend bool operator==(const CompareRow&, const CompareRow&) = default;
};

struct CompareTable {
  std::string model;
  std::vector<CompareRow> rows;

  Json to_json() const;
  std::string table() const;
};

/// One nearest and one SQuant row per bit width. Accuracy needs a labeled
/// dataset; without one the output error is measured on `probe` inputs.
CompareTable compare_roundings(const Graph& folded, const std::vector<int>& bits, const QuantConfig& base,
                               const Dataset& probe);

struct CalibrationTiming {
  std::vector<std::pair<std::string, double>> layers;  // median ms per layer
  double total_ms = 0.0;                               // median of whole-graph runs
};

/// Wall-clock of squant_round over every conv/fc layer, median of `runs`.
CalibrationTiming time_calibration(const Graph& folded, const QuantConfig& config, int runs = 5);

}  // namespace isq
