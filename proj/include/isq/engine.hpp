// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "isq/graph.hpp"
#include "isq/json.hpp"
#include "isq/quantized_graph.hpp"

namespace isq {

enum class ExecPath { Float, FakeQuant, IntSymmetric, IntAffine };
const char* to_string(ExecPath p);
ExecPath exec_path_from_string(const std::string& s);

/// Receives every node's output. Quantized paths report dequantized values,
/// so traces from different paths compare directly.
using NodeObserver = std::function<void(const std::string& id, const TensorF& value)>;

/// Float reference. Runs BatchNorm nodes directly, so folded and unfolded
/// graphs can be compared.
TensorF run_float(const Graph& graph, const TensorF& input, const NodeObserver& observer = {});

/// Simulated quantization in f32: weights and activations pass through
/// quantize -> dequantize with their static params. Conv/fc evaluate
/// sum(w_hat * x_hat) with the scales factored out of the sum, so the f32
/// accumulation is exact while |sum| < 2^24; larger sums are an error.
TensorF run_fake_quant(const QuantizedGraph& qg, const TensorF& input, const NodeObserver& observer = {});

/// Zero-point-free integer execution: int8 x int8 -> int32 conv/fc, int32
/// bias, requantization q = round(s_next / (s_w s_x) * acc). The last conv/fc
/// is dequantized as acc / (s_w s_x). Requires every zero-point to be 0.
TensorF run_int_symmetric(const QuantizedGraph& qg, const TensorF& input, const NodeObserver& observer = {});

/// Per-output-element terms of the affine expansion
///   sum (x - z_x)(w - z_w) = p0 - p1 - p2 + p3
/// p0 = sum x w, p1 = z_w sum x, p2 = z_x sum w, p3 = n z_x z_w.
struct AffineTerms {
  TensorAcc p0, p1, p2, p3;
  std::int64_t window = 0;  // n, taps per output element
};

struct AffineRun {
  TensorF output;
  std::map<std::string, AffineTerms> terms;
};

/// Integer execution with zero-points. Padding taps read z_x (real 0).
AffineRun run_int_affine(const QuantizedGraph& qg, const TensorF& input, const NodeObserver& observer = {});

TensorF run_path(const QuantizedGraph& qg, ExecPath path, const TensorF& input, const NodeObserver& observer = {});

struct LayerOps {
  std::string id;
  std::int64_t macs = 0;        // multiply-accumulates of the main sum
  std::int64_t extra_mults = 0;  // zero-point cross terms
  std::int64_t extra_adds = 0;
  std::int64_t weight_scales = 0;
  std::int64_t weight_zero_points = 0;
};

struct OpCount {
  ExecPath path = ExecPath::Float;
  std::vector<LayerOps> layers;
  std::int64_t float_macs = 0;
  std::int64_t int_macs = 0;
  std::int64_t extra_int_mults = 0;
  std::int64_t extra_int_adds = 0;
  std::int64_t scale_params = 0;
  std::int64_t zero_point_params = 0;

  Json to_json() const;
};

/// Work and quantization-parameter counts for one batch-1 inference of a
/// BN-free graph. Weight scales follow `granularity` (1 or O per layer).
OpCount count_ops(const Graph& folded, ExecPath path, Granularity granularity);
OpCount count_ops(const QuantizedGraph& qg, ExecPath path);

}  // namespace isq
