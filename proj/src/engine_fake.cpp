// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "engine_common.hpp"
#include "isq/engine.hpp"
#include "isq/kernels.hpp"

namespace isq {

namespace {

using detail::param_index;

// Largest magnitude every f32 partial sum may reach and still be an exact integer.
constexpr double kExactF32 = 16777216.0;

/// Grid offsets (q - z) of values already on the grid, as floats. For
/// dequantized inputs the recovery is exact, so this only factors the scale
/// out of the sum.
TensorF grid_offsets(const TensorF& x_hat, const QuantParams& p, std::int64_t per_channel_block = 0) {
  std::vector<float> v(x_hat.data().size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t c = per_channel_block ? param_index(p, i / static_cast<std::size_t>(per_channel_block)) : 0;
    const int q = quantize_value(x_hat[i], p.s(c), p.z(c), p.qmin(), p.qmax());
    v[i] = static_cast<float>(q - p.z(c));
  }
  return TensorF(x_hat.shape(), std::move(v));
}

void check_exact(const TensorF& x_off, const TensorF& w_off, const std::string& id) {
  float max_x = 0.0f;
  for (float v : x_off.data()) max_x = std::max(max_x, std::fabs(v));
  const auto O = static_cast<std::size_t>(w_off.shape()[0]);
  const std::size_t per = w_off.data().size() / O;
  for (std::size_t o = 0; o < O; ++o) {
    double sum = 0.0;
    for (std::size_t k = 0; k < per; ++k) sum += std::fabs(w_off[o * per + k]);
    if (sum * max_x >= kExactF32) {
      throw Error("engine.inexact_f32_accumulation",
                  "node '" + id + "': f32 accumulation could exceed 2^24 and lose exactness", ErrorKind::Internal);
    }
  }
}

TensorF weighted(const QuantizedGraph& qg, const Node& n, const TensorF& x, bool is_output) {
  const auto& layer = qg.layer(n.id);
  const auto& wp = layer.weight_params;
  const auto& xp = qg.grid(n.inputs.at(0));
  const auto& out = qg.grid(n.id);
  const TensorF w_hat = dequantize(layer.weight, wp);
  const std::int64_t O = w_hat.shape()[0];
  const TensorF w_off = grid_offsets(w_hat, wp, w_hat.numel() / O);
  const TensorF x_off = grid_offsets(x, xp);
  check_exact(x_off, w_off, n.id);

  const TensorF acc = n.is<op::Conv2d>() ? conv2d_f32(x_off, w_off, {}, std::get<op::Conv2d>(n.kind).window)
                                         : fully_connected_f32(x_off, w_off, {});
  const std::int64_t inner = acc.numel() / (acc.shape()[0] * O);
  std::vector<float> y(acc.data().size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto o = static_cast<std::size_t>((static_cast<std::int64_t>(i) / inner) % O);
    const std::int64_t a = static_cast<std::int64_t>(acc[i]) + detail::bias_code(layer.bias, o);
    detail::check_i32(a, n.id);
    y[i] = detail::finish_accumulator(a, is_output, wp, o, xp, out);
  }
  return TensorF(acc.shape(), std::move(y));
}

TensorF max_pool(const Node& n, const TensorF& x) {
  const auto g = detail::geometry_for(n, x.shape());
  std::vector<float> y(static_cast<std::size_t>(g.N * g.C * g.OH * g.OW));
  detail::for_each_window(g, [&](std::int64_t out, const std::vector<std::int64_t>& idx) {
    float m = x[static_cast<std::size_t>(idx[0])];
    for (auto i : idx) m = std::max(m, x[static_cast<std::size_t>(i)]);
    y[static_cast<std::size_t>(out)] = m;
  });
  return TensorF(Shape{g.N, g.C, g.OH, g.OW}, std::move(y));
}

TensorF average_pool(const Node& n, const TensorF& x, const QuantParams& p) {
  const auto g = detail::geometry_for(n, x.shape());
  const TensorF off = grid_offsets(x, p);
  std::vector<float> y(static_cast<std::size_t>(g.N * g.C * g.OH * g.OW));
  detail::for_each_window(g, [&](std::int64_t out, const std::vector<std::int64_t>& idx) {
    std::int64_t sum = 0;
    for (auto i : idx) sum += static_cast<std::int64_t>(off[static_cast<std::size_t>(i)]);
    const auto q = detail::average_codes(sum, static_cast<std::int64_t>(idx.size())) + p.z();
    y[static_cast<std::size_t>(out)] = dequantize_value(static_cast<int>(q), p.s(), p.z());
  });
  return TensorF(Shape{g.N, g.C, g.OH, g.OW}, std::move(y));
}

TensorF add(const TensorF& a, const QuantParams& pa, const TensorF& b, const QuantParams& pb, const QuantParams& out) {
  const TensorF oa = grid_offsets(a, pa);
  const TensorF ob = grid_offsets(b, pb);
  const float shared = std::min(pa.s(), pb.s());
  const double ra = static_cast<double>(shared) / pa.s();
  const double rb = static_cast<double>(shared) / pb.s();
  const double m = static_cast<double>(out.s()) / shared;
  std::vector<float> y(oa.data().size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::int64_t sum = detail::rescale(static_cast<std::int64_t>(oa[i]), ra) +
                             detail::rescale(static_cast<std::int64_t>(ob[i]), rb);
    const int q = detail::requantize(sum, m, out.z(), out.qmin(), out.qmax());
    y[i] = dequantize_value(q, out.s(), out.z());
  }
  return TensorF(a.shape(), std::move(y));
}

}  // namespace

TensorF run_fake_quant(const QuantizedGraph& qg, const TensorF& input, const NodeObserver& observer) {
  const Graph& graph = qg.graph;
  shape_inference(graph, input.shape());
  std::map<std::string, TensorF> values;
  values.emplace(kGraphInput, dequantize(quantize(input, qg.grid(kGraphInput)), qg.grid(kGraphInput)));
  if (observer) observer(kGraphInput, values.at(kGraphInput));
  for (const auto& n : graph.nodes) {
    const TensorF& x = values.at(n.inputs.at(0));
    const bool is_output = n.id == graph.output;
    TensorF y = std::visit(
        detail::overloaded{
            [&](const op::Conv2d&) { return weighted(qg, n, x, is_output); },
            [&](const op::FullyConnected&) { return weighted(qg, n, x, is_output); },
            [&](const op::BatchNorm&) -> TensorF {
              throw Error("engine.unfolded_batchnorm", "quantized graph still contains batchnorm '" + n.id + "'");
            },
            [&](const op::Relu&) {
              std::vector<float> v(x.data().begin(), x.data().end());
              for (auto& e : v) e = std::max(e, 0.0f);
              return TensorF(x.shape(), std::move(v));
            },
            [&](const op::MaxPool&) { return max_pool(n, x); },
            [&](const op::AvgPool&) { return average_pool(n, x, qg.grid(n.inputs[0])); },
            [&](const op::GlobalAvgPool&) { return average_pool(n, x, qg.grid(n.inputs[0])); },
            [&](const op::Add&) {
              return add(x, qg.grid(n.inputs[0]), values.at(n.inputs.at(1)), qg.grid(n.inputs[1]), qg.grid(n.id));
            },
            [&](const op::Flatten&) { return x.reshaped(Shape{x.shape()[0], x.numel() / x.shape()[0]}); },
        },
        n.kind);
    if (observer) observer(n.id, y);
    values.insert_or_assign(n.id, std::move(y));
  }
  return graph.nodes.empty() ? values.at(kGraphInput) : values.at(graph.output);
}

}  // namespace isq
