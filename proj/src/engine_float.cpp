// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "engine_common.hpp"
#include "isq/engine.hpp"

namespace isq {

const char* to_string(ExecPath p) {
  switch (p) {
    case ExecPath::Float: return "float";
    case ExecPath::FakeQuant: return "fake";
    case ExecPath::IntSymmetric: return "int";
    case ExecPath::IntAffine: return "int-affine";
  }
  return "?";
}

ExecPath exec_path_from_string(const std::string& s) {
  if (s == "float") return ExecPath::Float;
  if (s == "fake") return ExecPath::FakeQuant;
  if (s == "int") return ExecPath::IntSymmetric;
  if (s == "int-affine") return ExecPath::IntAffine;
  throw Error("engine.bad_path", "unknown execution path '" + s + "' (float, fake, int, int-affine)");
}

namespace {

std::span<const float> bias_of(const Graph& g, const Node& n) {
  const TensorF* b = g.optional_param(n, "bias");
  return b ? b->data() : std::span<const float>{};
}

TensorF batchnorm(const Graph& g, const Node& n, const TensorF& x) {
  const float eps = std::get<op::BatchNorm>(n.kind).epsilon;
  const auto gamma = g.param(n, "gamma").data();
  const auto beta = g.param(n, "beta").data();
  const auto mean = g.param(n, "mean").data();
  const auto var = g.param(n, "var").data();
  std::vector<double> factor(gamma.size());
  for (std::size_t c = 0; c < factor.size(); ++c) {
    factor[c] = static_cast<double>(gamma[c]) / std::sqrt(static_cast<double>(var[c]) + static_cast<double>(eps));
  }
  std::vector<float> y(x.data().size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto c = static_cast<std::size_t>(detail::channel_of(x.shape(), static_cast<std::int64_t>(i)));
    y[i] = static_cast<float>((static_cast<double>(x[i]) - mean[c]) * factor[c] + beta[c]);
  }
  return TensorF(x.shape(), std::move(y));
}

TensorF pool(const Node& n, const TensorF& x, bool max) {
  const auto g = detail::geometry_for(n, x.shape());
  std::vector<float> y(static_cast<std::size_t>(g.N * g.C * g.OH * g.OW));
  const float inv = 1.0f / static_cast<float>(g.k_h * g.k_w);
  detail::for_each_window(g, [&](std::int64_t out, const std::vector<std::int64_t>& idx) {
    float acc = max ? x[static_cast<std::size_t>(idx[0])] : 0.0f;
    for (auto i : idx) {
      const float v = x[static_cast<std::size_t>(i)];
      acc = max ? std::max(acc, v) : acc + v;
    }
    y[static_cast<std::size_t>(out)] = max ? acc : acc * inv;
  });
  return TensorF(Shape{g.N, g.C, g.OH, g.OW}, std::move(y));
}

}  // namespace

TensorF run_float(const Graph& graph, const TensorF& input, const NodeObserver& observer) {
  shape_inference(graph, input.shape());
  std::map<std::string, TensorF> values;
  values.emplace(kGraphInput, input);
  if (observer) observer(kGraphInput, input);
  for (const auto& n : graph.nodes) {
    const TensorF& x = values.at(n.inputs.at(0));
    TensorF y = std::visit(
        detail::overloaded{
            [&](const op::Conv2d& c) { return conv2d_f32(x, graph.param(n, "weight"), bias_of(graph, n), c.window); },
            [&](const op::FullyConnected&) { return fully_connected_f32(x, graph.param(n, "weight"), bias_of(graph, n)); },
            [&](const op::BatchNorm&) { return batchnorm(graph, n, x); },
            [&](const op::Relu&) {
              std::vector<float> v(x.data().begin(), x.data().end());
              for (auto& e : v) e = std::max(e, 0.0f);
              return TensorF(x.shape(), std::move(v));
            },
            [&](const op::MaxPool&) { return pool(n, x, true); },
            [&](const op::AvgPool&) { return pool(n, x, false); },
            [&](const op::GlobalAvgPool&) { return pool(n, x, false); },
            [&](const op::Add&) {
              const TensorF& b = values.at(n.inputs.at(1));
              std::vector<float> v(x.data().size());
              for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] + b[i];
              return TensorF(x.shape(), std::move(v));
            },
            [&](const op::Flatten&) { return x.reshaped(Shape{x.shape()[0], x.numel() / x.shape()[0]}); },
        },
        n.kind);
    if (observer) observer(n.id, y);
    values.insert_or_assign(n.id, std::move(y));
  }
  return graph.nodes.empty() ? input : values.at(graph.output);
}

}  // namespace isq
