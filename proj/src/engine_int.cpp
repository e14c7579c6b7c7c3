// SPDX-License-Identifier: Apache-2.0
#include "engine_common.hpp"
#include "isq/engine.hpp"
#include "isq/kernels.hpp"

namespace isq {

namespace {

using detail::param_index;

/// Codes of one node output together with the grid they live on.
struct Coded {
  TensorQ codes;
  const QuantParams* grid = nullptr;
};

TensorF decode(const Coded& c) { return dequantize(c.codes, *c.grid); }

TensorQ with_grid(Shape shape, std::vector<std::int16_t> codes, const QuantParams& p) {
  return TensorQ(std::move(shape), std::move(codes), p.qmin(), p.qmax());
}

/// Accumulator source for conv/fc: sum over taps of (x - z_x)(w - z_w).
using AccumulateFn = std::function<std::vector<std::int64_t>(const Node&, const TensorQ& x, const QuantParams& xp,
                                                             const QuantizedLayer& layer, Shape& out_shape)>;

std::vector<std::int64_t> widen(const TensorAcc& a) { return {a.data().begin(), a.data().end()}; }

std::vector<std::int64_t> symmetric_acc(const Node& n, const TensorQ& x, const QuantParams&, const QuantizedLayer& layer,
                                        Shape& out_shape) {
  TensorAcc acc = n.is<op::Conv2d>() ? conv2d_int(x, layer.weight, std::get<op::Conv2d>(n.kind).window)
                                     : fully_connected_int(x, layer.weight);
  out_shape = acc.shape();
  return widen(acc);
}

/// p1 = z_w * (sum of x over each window), padding taps reading z_x.
TensorAcc window_sums(const Node& n, const TensorQ& x, const QuantParams& xp, const Shape& wshape) {
  if (n.is<op::Conv2d>()) {
    const Shape ones_shape{1, wshape[1], wshape[2], wshape[3]};
    const TensorQ ones(ones_shape, std::vector<std::int16_t>(static_cast<std::size_t>(ones_shape.numel()), 1), -128, 127);
    return conv2d_int(x, ones, std::get<op::Conv2d>(n.kind).window, xp.z());
  }
  const TensorQ ones(Shape{1, wshape[1]}, std::vector<std::int16_t>(static_cast<std::size_t>(wshape[1]), 1), -128, 127);
  return fully_connected_int(x, ones);
}

AffineTerms affine_terms(const Node& n, const TensorQ& x, const QuantParams& xp, const QuantizedLayer& layer) {
  const auto& wp = layer.weight_params;
  const Shape& ws = layer.weight.shape();
  const std::int64_t O = ws[0];
  const std::int64_t taps = ws.numel() / O;
  AffineTerms t;
  t.window = taps;
  t.p0 = n.is<op::Conv2d>() ? conv2d_int(x, layer.weight, std::get<op::Conv2d>(n.kind).window, xp.z())
                            : fully_connected_int(x, layer.weight);
  const TensorAcc sums = window_sums(n, x, xp, ws);
  const Shape& os = t.p0.shape();
  const std::int64_t inner = t.p0.numel() / (os[0] * O);
  std::vector<std::int32_t> p1(static_cast<std::size_t>(t.p0.numel()));
  std::vector<std::int32_t> p2(static_cast<std::size_t>(t.p0.numel()));
  std::vector<std::int32_t> p3(static_cast<std::size_t>(t.p0.numel()));
  std::vector<std::int64_t> wsum(static_cast<std::size_t>(O), 0);
  for (std::int64_t o = 0; o < O; ++o)
    for (std::int64_t k = 0; k < taps; ++k) wsum[static_cast<std::size_t>(o)] += layer.weight[static_cast<std::size_t>(o * taps + k)];
  for (std::int64_t i = 0; i < t.p0.numel(); ++i) {
    const std::int64_t b = i / (O * inner);
    const std::int64_t o = (i / inner) % O;
    const std::int64_t pix = i % inner;
    const std::int64_t zw = wp.z(param_index(wp, static_cast<std::size_t>(o)));
    const std::int64_t v1 = zw * sums[static_cast<std::size_t>(b * inner + pix)];
    const std::int64_t v2 = static_cast<std::int64_t>(xp.z()) * wsum[static_cast<std::size_t>(o)];
    const std::int64_t v3 = taps * xp.z() * zw;
    detail::check_i32(v1, n.id);
    detail::check_i32(v2, n.id);
    detail::check_i32(v3, n.id);
    p1[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(v1);
    p2[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(v2);
    p3[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(v3);
  }
  t.p1 = TensorAcc(os, std::move(p1));
  t.p2 = TensorAcc(os, std::move(p2));
  t.p3 = TensorAcc(os, std::move(p3));
  return t;
}

Coded weighted(const QuantizedGraph& qg, const Node& n, const Coded& x, const AccumulateFn& accumulate,
               std::vector<float>* output_values) {
  const auto& layer = qg.layer(n.id);
  const auto& wp = layer.weight_params;
  const auto& out = qg.grid(n.id);
  Shape shape;
  const auto acc = accumulate(n, x.codes, *x.grid, layer, shape);
  const std::int64_t O = layer.weight.shape()[0];
  const std::int64_t inner = static_cast<std::int64_t>(acc.size()) / (shape[0] * O);
  const bool is_output = output_values != nullptr;
  std::vector<std::int16_t> codes(acc.size());
  if (is_output) output_values->resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const auto o = static_cast<std::size_t>((static_cast<std::int64_t>(i) / inner) % O);
    const std::int64_t a = acc[i] + detail::bias_code(layer.bias, o);
    detail::check_i32(a, n.id);
    const std::size_t c = param_index(wp, o);
    if (is_output) {
      (*output_values)[i] = detail::dequantize_accumulator(a, wp.s(c), x.grid->s());
      codes[i] = static_cast<std::int16_t>(out.z());
    } else {
      codes[i] = static_cast<std::int16_t>(
          detail::requantize(a, detail::requant_multiplier(out.s(), wp.s(c), x.grid->s()), out.z(), out.qmin(), out.qmax()));
    }
  }
  return {with_grid(shape, std::move(codes), out), &out};
}

Coded pool(const Node& n, const Coded& x, bool max) {
  const auto g = detail::geometry_for(n, x.codes.shape());
  const int z = x.grid->z();
  std::vector<std::int16_t> y(static_cast<std::size_t>(g.N * g.C * g.OH * g.OW));
  detail::for_each_window(g, [&](std::int64_t out, const std::vector<std::int64_t>& idx) {
    std::int64_t acc = max ? x.codes[static_cast<std::size_t>(idx[0])] : 0;
    for (auto i : idx) {
      const std::int64_t q = x.codes[static_cast<std::size_t>(i)];
      acc = max ? std::max(acc, q) : acc + (q - z);
    }
    y[static_cast<std::size_t>(out)] =
        static_cast<std::int16_t>(max ? acc : detail::average_codes(acc, static_cast<std::int64_t>(idx.size())) + z);
  });
  return {with_grid(Shape{g.N, g.C, g.OH, g.OW}, std::move(y), *x.grid), x.grid};
}

Coded add(const Coded& a, const Coded& b, const QuantParams& out) {
  const auto& pa = *a.grid;
  const auto& pb = *b.grid;
  const float shared = std::min(pa.s(), pb.s());
  const double ra = static_cast<double>(shared) / pa.s();
  const double rb = static_cast<double>(shared) / pb.s();
  const double m = static_cast<double>(out.s()) / shared;
  std::vector<std::int16_t> y(static_cast<std::size_t>(a.codes.numel()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::int64_t sum =
        detail::rescale(a.codes[i] - pa.z(), ra) + detail::rescale(b.codes[i] - pb.z(), rb);
    y[i] = static_cast<std::int16_t>(detail::requantize(sum, m, out.z(), out.qmin(), out.qmax()));
  }
  return {with_grid(a.codes.shape(), std::move(y), out), &out};
}

TensorF run_codes(const QuantizedGraph& qg, const TensorF& input, const NodeObserver& observer,
                  const AccumulateFn& accumulate) {
  const Graph& graph = qg.graph;
  shape_inference(graph, input.shape());
  std::map<std::string, Coded> values;
  const auto& in_grid = qg.grid(kGraphInput);
  values.emplace(kGraphInput, Coded{quantize(input, in_grid), &in_grid});
  if (observer) observer(kGraphInput, decode(values.at(kGraphInput)));
  std::vector<float> output_values;
  for (const auto& n : graph.nodes) {
    const Coded& x = values.at(n.inputs.at(0));
    const bool is_output = n.id == graph.output;
    Coded y = std::visit(
        detail::overloaded{
            [&](const op::Conv2d&) { return weighted(qg, n, x, accumulate, is_output ? &output_values : nullptr); },
            [&](const op::FullyConnected&) {
              return weighted(qg, n, x, accumulate, is_output ? &output_values : nullptr);
            },
            [&](const op::BatchNorm&) -> Coded {
              throw Error("engine.unfolded_batchnorm", "quantized graph still contains batchnorm '" + n.id + "'");
            },
            [&](const op::Relu&) {
              std::vector<std::int16_t> v(x.codes.data().begin(), x.codes.data().end());
              const auto z = static_cast<std::int16_t>(x.grid->z());
              for (auto& e : v) e = std::max(e, z);
              return Coded{with_grid(x.codes.shape(), std::move(v), *x.grid), x.grid};
            },
            [&](const op::MaxPool&) { return pool(n, x, true); },
            [&](const op::AvgPool&) { return pool(n, x, false); },
            [&](const op::GlobalAvgPool&) { return pool(n, x, false); },
            [&](const op::Add&) { return add(x, values.at(n.inputs.at(1)), qg.grid(n.id)); },
            [&](const op::Flatten&) {
              return Coded{x.codes.reshaped(Shape{x.codes.shape()[0], x.codes.numel() / x.codes.shape()[0]}), x.grid};
            },
        },
        n.kind);
    if (observer || is_output) {
      TensorF value = is_output && n.has_weights() ? TensorF(y.codes.shape(), output_values) : decode(y);
      if (observer) observer(n.id, value);
    }
    values.insert_or_assign(n.id, std::move(y));
  }
  if (graph.nodes.empty()) return decode(values.at(kGraphInput));
  const Node& last = graph.node(graph.output);
  return last.has_weights() ? TensorF(values.at(graph.output).codes.shape(), std::move(output_values))
                            : decode(values.at(graph.output));
}

void require_zero_point_free(const QuantizedGraph& qg) {
  for (const auto& [id, p] : qg.activations) {
    if (!p.zero_point_free()) {
      throw Error("engine.zero_point_present", "symmetric integer path needs zero-point-free grids; '" + id + "' has one");
    }
  }
  for (const auto& [id, l] : qg.layers) {
    if (!l.weight_params.zero_point_free()) {
      throw Error("engine.zero_point_present", "symmetric integer path needs zero-point-free weights; '" + id + "' has one");
    }
  }
}

}  // namespace

TensorF run_int_symmetric(const QuantizedGraph& qg, const TensorF& input, const NodeObserver& observer) {
  require_zero_point_free(qg);
  return run_codes(qg, input, observer, symmetric_acc);
}

AffineRun run_int_affine(const QuantizedGraph& qg, const TensorF& input, const NodeObserver& observer) {
  AffineRun run;
  AccumulateFn acc = [&](const Node& n, const TensorQ& x, const QuantParams& xp, const QuantizedLayer& layer,
                         Shape& out_shape) {
    AffineTerms t = affine_terms(n, x, xp, layer);
    out_shape = t.p0.shape();
    std::vector<std::int64_t> a(static_cast<std::size_t>(t.p0.numel()));
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<std::int64_t>(t.p0[i]) - t.p1[i] - t.p2[i] + t.p3[i];
    }
    run.terms.insert_or_assign(n.id, std::move(t));
    return a;
  };
  run.output = run_codes(qg, input, observer, acc);
  return run;
}

TensorF run_path(const QuantizedGraph& qg, ExecPath path, const TensorF& input, const NodeObserver& observer) {
  switch (path) {
    case ExecPath::Float: return run_float(qg.graph, input, observer);
    case ExecPath::FakeQuant: return run_fake_quant(qg, input, observer);
    case ExecPath::IntSymmetric: return run_int_symmetric(qg, input, observer);
    case ExecPath::IntAffine: return run_int_affine(qg, input, observer).output;
  }
  throw Error("engine.bad_path", "unknown execution path", ErrorKind::Internal);
}

}  // namespace isq
