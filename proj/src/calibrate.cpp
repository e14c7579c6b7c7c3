// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <random>

#include "isq/engine.hpp"
#include "isq/error.hpp"
#include "isq/quantizer.hpp"

namespace isq {

std::map<std::string, NumberSetClass> activation_classes(const Graph& graph) {
  std::map<std::string, NumberSetClass> cls;
  cls[kGraphInput] = NumberSetClass::Signed;
  for (const auto& n : graph.nodes) {
    NumberSetClass c = NumberSetClass::Signed;
    if (n.is<op::Relu>()) {
      c = NumberSetClass::Unsigned;
    } else if (n.is<op::MaxPool>() || n.is<op::AvgPool>() || n.is<op::GlobalAvgPool>() || n.is<op::Flatten>()) {
      c = cls.at(n.inputs.at(0));
    }
    cls[n.id] = c;
  }
  return cls;
}

std::map<std::string, QuantParams> calibrate_activations(const Graph& graph, const CalibrationOptions& opts) {
  if (opts.batches < 1 || opts.batch_size < 1) {
    throw Error("quantizer.bad_calibration", "calibration needs at least one batch of at least one sample");
  }
  for (const auto& n : graph.nodes) {
    if (n.is<op::BatchNorm>()) {
      throw Error("quantizer.unfolded_batchnorm", "fold batchnorm '" + n.id + "' before calibrating");
    }
  }
  auto dims = graph.input_shape.dims();
  dims[0] = opts.batch_size;
  const Shape batch_shape(dims);

  struct Range {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
  };
  std::map<std::string, Range> ranges;
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);

  for (int b = 0; b < opts.batches; ++b) {
    std::vector<float> x(static_cast<std::size_t>(batch_shape.numel()));
    for (auto& v : x) v = normal(rng);
    run_float(graph, TensorF(batch_shape, std::move(x)), [&](const std::string& id, const TensorF& t) {
      auto [mn, mx] = std::minmax_element(t.data().begin(), t.data().end());
      auto& r = ranges[id];
      r.lo = std::min(r.lo, *mn);
      r.hi = std::max(r.hi, *mx);
    });
  }

  const auto classes = activation_classes(graph);
  std::map<std::string, QuantParams> out;
  for (const auto& [id, r] : ranges) {
    RangeOptions ro{opts.bits, opts.scheme, classes.at(id), opts.allow_degenerate};
    try {
      out.emplace(id, params_from_range(r.lo, r.hi, ro));
    } catch (const Error& e) {
      throw Error(e.code(), "activation '" + id + "': " + e.message(), e.kind());
    }
  }
  return out;
}

}  // namespace isq
