// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "isq/graph.hpp"
#include "isq/tensor.hpp"

namespace isq {

/// Affine: asymmetric range [beta, alpha] with a zero-point.
/// Scale: symmetric, zero-point fixed at 0.
enum class QuantScheme { Affine, Scale };
enum class Granularity { PerTensor, PerChannel };
/// Unsigned sets (e.g. post-relu activations) have min >= 0.
enum class NumberSetClass { Signed, Unsigned };

const char* to_string(QuantScheme s);
const char* to_string(Granularity g);
const char* to_string(NumberSetClass c);
QuantScheme scheme_from_string(const std::string& s);
Granularity granularity_from_string(const std::string& s);

/// Rounding used everywhere a real value meets the integer grid.
inline constexpr const char* kRoundingRule = "half-away-from-zero";
double round_half_away(double v);

/// Scale factor s is a multiplier: q = round(s * x) + z, x_hat = (q - z) / s.
/// Per-tensor params carry one entry in each vector; per-channel params one
/// entry per output channel (axis 0 of a conv/fc weight).
struct QuantParams {
  QuantScheme scheme = QuantScheme::Scale;
  Granularity granularity = Granularity::PerTensor;
  int bits = 8;
  NumberSetClass set_class = NumberSetClass::Signed;
  std::vector<float> scale;
  std::vector<int> zero_point;
  std::vector<float> alpha;
  std::vector<float> beta;

  std::size_t channels() const noexcept { return scale.size(); }
  float s(std::size_t c = 0) const { return scale.at(c); }
  int z(std::size_t c = 0) const { return zero_point.at(c); }
  /// Code range: Scale/Signed [-(2^(b-1)-1), 2^(b-1)-1]; Scale/Unsigned
  /// [0, 2^b-1]; Affine [-2^(b-1), 2^(b-1)-1].
  int qmin() const noexcept;
  int qmax() const noexcept;
  bool zero_point_free() const noexcept;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

struct RangeOptions {
  int bits = 8;
  QuantScheme scheme = QuantScheme::Scale;
  NumberSetClass set_class = NumberSetClass::Signed;
  /// Substitute s = 1, z = 0 for an all-zero set instead of throwing.
  bool allow_degenerate = false;
};

/// Params for one observed range. `max_value`/`min_value` are the set's
/// extremes; Scale/Signed uses max|x|, Affine widens the range to include 0.
QuantParams params_from_range(float min_value, float max_value, const RangeOptions& opts);

QuantParams compute_params(const TensorF& values, int bits, QuantScheme scheme, Granularity granularity,
                           NumberSetClass set_class, bool allow_degenerate = false);

/// clip(round(s * x) + z, lo, hi) with the product formed exactly in double.
int quantize_value(float x, float s, int z, int lo, int hi);
float dequantize_value(int q, float s, int z);

TensorQ quantize(const TensorF& values, const QuantParams& p);
TensorF dequantize(const TensorQ& q, const QuantParams& p);

struct CalibrationOptions {
  int batches = 32;
  int batch_size = 16;
  std::uint64_t seed = 0;
  int bits = 8;
  QuantScheme scheme = QuantScheme::Scale;
  bool allow_degenerate = false;
};

/// Number-set class of every node output (and "input"): relu outputs are
/// Unsigned, shape-only ops inherit from their input, the rest are Signed.
std::map<std::string, NumberSetClass> activation_classes(const Graph& graph);

/// Static per-tensor activation params for "input" and every node, from the
/// float engine run on seeded N(0, 1) batches. Reads no data.
std::map<std::string, QuantParams> calibrate_activations(const Graph& graph, const CalibrationOptions& opts);

}  // namespace isq
