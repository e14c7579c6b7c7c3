// SPDX-License-Identifier: Apache-2.0
#include "isq/engine.hpp"

namespace isq {

Json OpCount::to_json() const {
  Json j;
  j["path"] = to_string(path);
  j["float_macs"] = float_macs;
  j["int_macs"] = int_macs;
  j["extra_int_mults"] = extra_int_mults;
  j["extra_int_adds"] = extra_int_adds;
  j["scale_params"] = scale_params;
  j["zero_point_params"] = zero_point_params;
  Json layers_json = Json::array();
  for (const auto& l : layers) {
    layers_json.push_back({{"id", l.id},
                           {"macs", l.macs},
                           {"extra_mults", l.extra_mults},
                           {"extra_adds", l.extra_adds},
                           {"weight_scales", l.weight_scales},
                           {"weight_zero_points", l.weight_zero_points}});
  }
  j["layers"] = std::move(layers_json);
  return j;
}

OpCount count_ops(const QuantizedGraph& qg, ExecPath path) {
  return count_ops(qg.graph, path, qg.config.granularity);
}

OpCount count_ops(const Graph& g, ExecPath path, Granularity granularity) {
  auto in = g.input_shape.dims();
  in[0] = 1;
  const ShapeTable shapes = shape_inference(g, Shape(in));
  const bool quantized = path != ExecPath::Float;
  const bool affine = path == ExecPath::IntAffine;

  OpCount c;
  c.path = path;
  for (const auto& n : g.nodes) {
    if (!n.has_weights()) continue;
    const Shape& ws = g.param(n, "weight").shape();
    const std::int64_t O = ws[0];
    const std::int64_t taps = ws.numel() / O;
    const std::int64_t E = shapes.at(n.id).numel();
    LayerOps l;
    l.id = n.id;
    l.macs = E * taps;
    if (quantized) l.weight_scales = granularity == Granularity::PerChannel ? O : 1;
    if (affine) {
      // p1: window sum (taps - 1 adds) and one multiply by z_w per output.
      // p2: per-channel weight sum and one multiply by z_x. p3: one product per
      // channel. Combining p0 - p1 - p2 + p3 costs three adds per output.
      l.extra_adds = E * (taps - 1) + O * (taps - 1) + 3 * E;
      l.extra_mults = E + O + O;
      l.weight_zero_points = l.weight_scales;
    }
    if (path == ExecPath::IntSymmetric || affine) {
      c.int_macs += l.macs;
    } else {
      c.float_macs += l.macs;
    }
    c.extra_int_mults += l.extra_mults;
    c.extra_int_adds += l.extra_adds;
    c.scale_params += l.weight_scales;
    c.zero_point_params += l.weight_zero_points;
    c.layers.push_back(std::move(l));
  }
  if (quantized) {
    // One activation grid per distinct producer of a requantized value.
    std::int64_t grids = 1;
    for (const auto& n : g.nodes) {
      if (n.has_weights() || n.is<op::Add>()) ++grids;
    }
    c.scale_params += grids;
    if (affine) c.zero_point_params += grids;
  }
  return c;
}

}  // namespace isq
