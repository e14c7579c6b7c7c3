// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference computations for tests. These share no code with the
// library beyond the tensor containers: plain loop nests in double or int64.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "isq/graph.hpp"

namespace isq::testing {

struct ConvGeometry {
  std::int64_t N, C, H, W, O, KH, KW, OH, OW;
  int sh, sw, ph, pw;
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& w, const ConvWindow& win) {
  ConvGeometry g{x[0], x[1], x[2], x[3], w[0], w[2], w[3], 0, 0, win.stride[0], win.stride[1], win.pad[0], win.pad[1]};
  g.OH = (g.H + 2 * g.ph - g.KH) / g.sh + 1;
  g.OW = (g.W + 2 * g.pw - g.KW) / g.sw + 1;
  return g;
}

/// Cross-correlation in double; out-of-image taps read `pad_value`.
template <typename X, typename Wt, typename Acc = double>
std::vector<Acc> naive_conv(const ConvGeometry& g, const X& x, const Wt& w, Acc pad_value = 0) {
  std::vector<Acc> y(static_cast<std::size_t>(g.N * g.O * g.OH * g.OW), 0);
  for (std::int64_t n = 0; n < g.N; ++n)
    for (std::int64_t o = 0; o < g.O; ++o)
      for (std::int64_t oh = 0; oh < g.OH; ++oh)
        for (std::int64_t ow = 0; ow < g.OW; ++ow) {
          Acc acc = 0;
          for (std::int64_t c = 0; c < g.C; ++c)
            for (std::int64_t kh = 0; kh < g.KH; ++kh)
              for (std::int64_t kw = 0; kw < g.KW; ++kw) {
                const std::int64_t ih = oh * g.sh - g.ph + kh;
                const std::int64_t iw = ow * g.sw - g.pw + kw;
                const bool inside = ih >= 0 && ih < g.H && iw >= 0 && iw < g.W;
                const Acc xv = inside ? static_cast<Acc>(x[static_cast<std::size_t>(((n * g.C + c) * g.H + ih) * g.W + iw)])
                                      : pad_value;
                acc += xv * static_cast<Acc>(w[static_cast<std::size_t>(((o * g.C + c) * g.KH + kh) * g.KW + kw)]);
              }
          y[static_cast<std::size_t>(((n * g.O + o) * g.OH + oh) * g.OW + ow)] = acc;
        }
  return y;
}

/// Float graph interpreter in double precision (BatchNorm included).
inline std::vector<double> interpret_double(const Graph& g, const TensorF& input, Shape* out_shape = nullptr) {
  struct Value {
    Shape shape;
    std::vector<double> v;
  };
  std::map<std::string, Value> vals;
  vals[kGraphInput] = {input.shape(), std::vector<double>(input.data().begin(), input.data().end())};
  auto channel = [](const Shape& s, std::size_t i) {
    std::int64_t inner = 1;
    for (std::size_t d = 2; d < s.rank(); ++d) inner *= s[d];
    return static_cast<std::size_t>((static_cast<std::int64_t>(i) / inner) % s[1]);
  };
  for (const auto& n : g.nodes) {
    const Value& x = vals.at(n.inputs[0]);
    Value y;
    if (const auto* c = std::get_if<op::Conv2d>(&n.kind)) {
      const auto& w = g.param(n, "weight");
      const auto geo = conv_geometry(x.shape, w.shape(), c->window);
      y.v = naive_conv(geo, x.v, w.data());
      y.shape = Shape{geo.N, geo.O, geo.OH, geo.OW};
      if (const auto* b = g.optional_param(n, "bias"))
        for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += (*b)[channel(y.shape, i)];
    } else if (n.is<op::FullyConnected>()) {
      const auto& w = g.param(n, "weight");
      const std::int64_t N = x.shape[0], K = w.shape()[1], O = w.shape()[0];
      y.shape = Shape{N, O};
      y.v.assign(static_cast<std::size_t>(N * O), 0.0);
      for (std::int64_t r = 0; r < N; ++r)
        for (std::int64_t o = 0; o < O; ++o) {
          double acc = 0.0;
          for (std::int64_t k = 0; k < K; ++k) acc += x.v[static_cast<std::size_t>(r * K + k)] * w[static_cast<std::size_t>(o * K + k)];
          if (const auto* b = g.optional_param(n, "bias")) acc += (*b)[static_cast<std::size_t>(o)];
          y.v[static_cast<std::size_t>(r * O + o)] = acc;
        }
    } else if (const auto* bn = std::get_if<op::BatchNorm>(&n.kind)) {
      y = x;
      for (std::size_t i = 0; i < y.v.size(); ++i) {
        const auto c = channel(y.shape, i);
        const double gamma = g.param(n, "gamma")[c], beta = g.param(n, "beta")[c];
        const double mean = g.param(n, "mean")[c], var = g.param(n, "var")[c];
        y.v[i] = gamma * (x.v[i] - mean) / std::sqrt(var + static_cast<double>(bn->epsilon)) + beta;
      }
    } else if (n.is<op::Relu>()) {
      y = x;
      for (auto& e : y.v) e = std::max(e, 0.0);
    } else if (n.is<op::Add>()) {
      y = x;
      const Value& b = vals.at(n.inputs[1]);
      for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += b.v[i];
    } else if (n.is<op::Flatten>()) {
      y = x;
      y.shape = Shape{x.shape[0], static_cast<std::int64_t>(x.v.size()) / x.shape[0]};
    } else {
      std::int64_t k_h, k_w, s_h, s_w;
      bool is_max = false;
      if (const auto* p = std::get_if<op::MaxPool>(&n.kind)) {
        k_h = k_w = p->kernel;
        s_h = s_w = p->stride;
        is_max = true;
      } else if (const auto* a = std::get_if<op::AvgPool>(&n.kind)) {
        k_h = k_w = a->kernel;
        s_h = s_w = a->stride;
      } else {
        k_h = x.shape[2];
        k_w = x.shape[3];
        s_h = s_w = 1;
      }
      const std::int64_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
      const std::int64_t OH = (H - k_h) / s_h + 1, OW = (W - k_w) / s_w + 1;
      y.shape = Shape{N, C, OH, OW};
      for (std::int64_t b = 0; b < N; ++b)
        for (std::int64_t c = 0; c < C; ++c)
          for (std::int64_t oh = 0; oh < OH; ++oh)
            for (std::int64_t ow = 0; ow < OW; ++ow) {
              double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
              for (std::int64_t i = 0; i < k_h; ++i)
                for (std::int64_t j = 0; j < k_w; ++j) {
                  const double v = x.v[static_cast<std::size_t>(((b * C + c) * H + oh * s_h + i) * W + ow * s_w + j)];
                  acc = is_max ? std::max(acc, v) : acc + v;
                }
              y.v.push_back(is_max ? acc : acc / static_cast<double>(k_h * k_w));
            }
    }
    vals[n.id] = std::move(y);
  }
  const Value& out = vals.at(g.nodes.empty() ? std::string(kGraphInput) : g.output);
  if (out_shape) *out_shape = out.shape;
  return out.v;
}

/// Smallest number of single-step flips that brings |sum of errors| to 0.5 or
/// below, found by enumerating every subset of flippable elements. A flip
/// moves a nearest-rounded code one step the other way (error e -> e - sign e)
/// and must keep the code inside [lo, hi]; elements with zero error or whose
/// nearest code was clipped cannot flip. Returns -1 when no subset works.
inline int exhaustive_min_flips(const std::vector<double>& scaled, int lo, int hi) {
  double base = 0.0;
  std::vector<int> step;  // +1 / -1 change of the error sum per flippable element
  for (double v : scaled) {
    double q = std::round(v);  // half away from zero, as the library documents
    bool clipped = false;
    if (q < lo || q > hi) {
      q = std::min<double>(std::max<double>(q, lo), hi);
      clipped = true;
    }
    const double e = v - q;
    base += e;
    if (clipped || e == 0.0) continue;
    const int dir = e > 0 ? 1 : -1;  // code moves up when the error is positive
    if (q + dir < lo || q + dir > hi) continue;
    step.push_back(-dir);
  }
  int best = -1;
  const std::size_t m = step.size();
  // Gray-code walk over all 2^m subsets; the integer shift is tracked
  // exactly, so every subset's sum is a single rounding of base + shift.
  int shift = 0;
  int count = 0;
  std::vector<bool> in(m, false);
  if (std::fabs(base) <= 0.5) best = 0;
  for (std::uint64_t i = 1; i < (std::uint64_t{1} << m); ++i) {
    const auto bit = static_cast<std::size_t>(__builtin_ctzll(i));
    in[bit] = !in[bit];
    shift += in[bit] ? step[bit] : -step[bit];
    count += in[bit] ? 1 : -1;
    if (std::fabs(base + shift) <= 0.5 && (best < 0 || count < best)) best = count;
  }
  return best;
}

}  // namespace isq::testing
