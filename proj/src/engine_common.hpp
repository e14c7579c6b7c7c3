// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "isq/error.hpp"
#include "isq/graph.hpp"
#include "isq/quantizer.hpp"

namespace isq::detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

// Requantization rules shared by the fake-quant and integer paths. Keeping a
// single definition is what makes the two paths agree bit for bit.

inline double requant_multiplier(float s_out, float s_w, float s_x) {
  return static_cast<double>(s_out) / (static_cast<double>(s_w) * static_cast<double>(s_x));
}

inline int requantize(std::int64_t acc, double multiplier, int z_out, int lo, int hi) {
  const double r = round_half_away(multiplier * static_cast<double>(acc)) + z_out;
  return static_cast<int>(std::clamp(r, static_cast<double>(lo), static_cast<double>(hi)));
}

/// Unclipped rescale of a centered code onto another grid.
inline std::int64_t rescale(std::int64_t centered, double ratio) {
  return static_cast<std::int64_t>(round_half_away(ratio * static_cast<double>(centered)));
}

inline float dequantize_accumulator(std::int64_t acc, float s_w, float s_x) {
  return static_cast<float>(static_cast<double>(acc) / (static_cast<double>(s_w) * static_cast<double>(s_x)));
}

/// Rounded mean of centered codes.
inline std::int64_t average_codes(std::int64_t sum, std::int64_t count) {
  return static_cast<std::int64_t>(round_half_away(static_cast<double>(sum) / static_cast<double>(count)));
}

inline std::int64_t bias_code(const std::vector<std::int32_t>& bias, std::size_t o) {
  return bias.empty() ? 0 : bias[o];
}

inline void check_i32(std::int64_t v, const std::string& node) {
  if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max()) {
    throw Error("engine.accumulator_overflow", "node '" + node + "' accumulator exceeds the int32 range",
                ErrorKind::Internal);
  }
}

struct PoolGeometry {
  std::int64_t N, C, H, W, OH, OW, k_h, k_w, s_h, s_w;
};

inline PoolGeometry pool_geometry(const Shape& in, std::int64_t kh, std::int64_t kw, std::int64_t sh, std::int64_t sw) {
  PoolGeometry g{in[0], in[1], in[2], in[3], 0, 0, kh, kw, sh, sw};
  g.OH = (g.H - kh) / sh + 1;
  g.OW = (g.W - kw) / sw + 1;
  return g;
}

/// Visits every pooling window; `emit(out_index, begin_fn)` style is avoided
/// in favour of passing the window element indices to `fn`.
template <typename Fn>
void for_each_window(const PoolGeometry& g, Fn&& fn) {
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(g.k_h * g.k_w));
  std::int64_t out = 0;
  for (std::int64_t n = 0; n < g.N; ++n)
    for (std::int64_t c = 0; c < g.C; ++c)
      for (std::int64_t oh = 0; oh < g.OH; ++oh)
        for (std::int64_t ow = 0; ow < g.OW; ++ow) {
          idx.clear();
          for (std::int64_t kh = 0; kh < g.k_h; ++kh)
            for (std::int64_t kw = 0; kw < g.k_w; ++kw)
              idx.push_back(((n * g.C + c) * g.H + oh * g.s_h + kh) * g.W + ow * g.s_w + kw);
          fn(out++, idx);
        }
}

inline PoolGeometry geometry_for(const Node& n, const Shape& in) {
  if (auto* p = std::get_if<op::MaxPool>(&n.kind)) return pool_geometry(in, p->kernel, p->kernel, p->stride, p->stride);
  if (auto* p = std::get_if<op::AvgPool>(&n.kind)) return pool_geometry(in, p->kernel, p->kernel, p->stride, p->stride);
  return pool_geometry(in, in[2], in[3], 1, 1);  // global average
}

/// Index into per-tensor or per-channel params for output channel o.
inline std::size_t param_index(const QuantParams& p, std::size_t o) { return p.channels() == 1 ? 0 : o; }

/// Value stored for a conv/fc accumulator: requantized onto the node's grid,
/// or dequantized directly when the node is the graph output.
inline float finish_accumulator(std::int64_t acc, bool is_output, const QuantParams& w, std::size_t o,
                                const QuantParams& x, const QuantParams& out) {
  const std::size_t c = param_index(w, o);
  if (is_output) return dequantize_accumulator(acc, w.s(c), x.s());
  const int q = requantize(acc, requant_multiplier(out.s(), w.s(c), x.s()), out.z(), out.qmin(), out.qmax());
  return dequantize_value(q, out.s(), out.z());
}

inline std::int64_t channel_of(const Shape& s, std::int64_t flat) {
  std::int64_t inner = 1;
  for (std::size_t i = 2; i < s.rank(); ++i) inner *= s[i];
  return (flat / inner) % s[1];
}

}  // namespace isq::detail
