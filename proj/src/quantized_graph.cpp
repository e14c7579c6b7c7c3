// SPDX-License-Identifier: Apache-2.0
#include "isq/quantized_graph.hpp"

#include <cmath>
#include <limits>

#include "isq/blob_io.hpp"
#include "isq/error.hpp"
#include "isq/manifest.hpp"

namespace isq {

const char* to_string(Rounding r) { return r == Rounding::Squant ? "squant" : "nearest"; }

Rounding rounding_from_string(const std::string& s) {
  if (s == "squant") return Rounding::Squant;
  if (s == "nearest") return Rounding::Nearest;
  throw Error("quantizer.bad_rounding", "rounding must be nearest or squant, got '" + s + "'");
}

Json QuantConfig::to_json() const {
  Json j;
  j["bits"] = bits;
  j["scheme"] = to_string(scheme);
  j["granularity"] = to_string(granularity);
  j["rounding"] = to_string(rounding);
  j["calib_batches"] = calib_batches;
  j["calib_batch_size"] = calib_batch_size;
  j["seed"] = seed;
  j["allow_degenerate"] = allow_degenerate;
  return j;
}

QuantConfig QuantConfig::from_json(const Json& j) {
  try {
    QuantConfig c;
    c.bits = j.at("bits").get<int>();
    c.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    c.granularity = granularity_from_string(j.at("granularity").get<std::string>());
    c.rounding = rounding_from_string(j.at("rounding").get<std::string>());
    c.calib_batches = j.at("calib_batches").get<int>();
    c.calib_batch_size = j.at("calib_batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.allow_degenerate = j.at("allow_degenerate").get<bool>();
    return c;
  } catch (const Json::exception& e) {
    throw Error("model_graph.schema", std::string("bad quantization config: ") + e.what());
  }
}

const QuantParams& QuantizedGraph::grid(const std::string& id) const {
  auto it = activations.find(id);
  if (it == activations.end()) throw Error("engine.missing_params", "no activation params for '" + id + "'");
  return it->second;
}

const QuantizedLayer& QuantizedGraph::layer(const std::string& id) const {
  auto it = layers.find(id);
  if (it == layers.end()) throw Error("engine.missing_params", "no quantized weights for '" + id + "'");
  return it->second;
}

namespace {

std::map<std::string, QuantParams> resolve_grids(const Graph& g, const std::map<std::string, QuantParams>& stats) {
  auto stat = [&](const std::string& id) -> const QuantParams& {
    auto it = stats.find(id);
    if (it == stats.end()) throw Error("quantizer.missing_activation", "no activation statistics for '" + id + "'");
    return it->second;
  };
  std::map<std::string, QuantParams> grids;
  grids.emplace(kGraphInput, stat(kGraphInput));
  for (const auto& n : g.nodes) {
    if (n.is<op::BatchNorm>()) {
      throw Error("quantizer.unfolded_batchnorm", "fold batchnorm '" + n.id + "' before quantizing");
    }
    if (n.has_weights() || n.is<op::Add>()) {
      const auto readers = g.consumers(n.id);
      const bool fuse = readers.size() == 1 && g.node(readers[0]).is<op::Relu>() && n.id != g.output;
      grids.emplace(n.id, stat(fuse ? readers[0] : n.id));
    } else {
      grids.emplace(n.id, grids.at(n.inputs.at(0)));
    }
  }
  return grids;
}

std::vector<std::int32_t> quantize_bias(const Graph& g, const Node& n, const QuantParams& wp, const QuantParams& xp) {
  const TensorF* b = g.optional_param(n, "bias");
  if (!b) return {};
  std::vector<std::int32_t> out(static_cast<std::size_t>(b->numel()));
  for (std::size_t o = 0; o < out.size(); ++o) {
    const std::size_t c = wp.granularity == Granularity::PerTensor ? 0 : o;
    const double v = round_half_away(static_cast<double>((*b)[o]) * static_cast<double>(wp.s(c)) *
                                     static_cast<double>(xp.s()));
    if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max()) {
      throw Error("engine.accumulator_overflow", "bias of '" + n.id + "' does not fit int32", ErrorKind::Internal);
    }
    out[o] = static_cast<std::int32_t>(v);
  }
  return out;
}

}  // namespace

QuantizedGraph quantize_graph(const Graph& folded, const QuantConfig& config) {
  CalibrationOptions co;
  co.batches = config.calib_batches;
  co.batch_size = config.calib_batch_size;
  co.seed = config.seed;
  co.bits = config.bits;
  co.scheme = config.scheme;
  co.allow_degenerate = config.allow_degenerate;
  return quantize_graph(folded, config, calibrate_activations(folded, co));
}

QuantizedGraph quantize_graph(const Graph& folded, const QuantConfig& config,
                              const std::map<std::string, QuantParams>& activation_params) {
  QuantizedGraph qg;
  qg.graph = folded;
  qg.config = config;
  qg.activations = resolve_grids(folded, activation_params);
  for (const auto& n : folded.nodes) {
    if (!n.has_weights()) continue;
    const TensorF& w = folded.param(n, "weight");
    QuantizedLayer layer;
    try {
      layer.weight_params = compute_params(w, config.bits, config.scheme, config.granularity, NumberSetClass::Signed,
                                           config.allow_degenerate);
    } catch (const Error& e) {
      throw Error(e.code(), "weights of '" + n.id + "': " + e.message(), e.kind());
    }
    auto rounded = config.rounding == Rounding::Squant ? squant_round(w, layer.weight_params)
                                                       : nearest_round(w, layer.weight_params);
    layer.weight = std::move(rounded.weight);
    layer.report = std::move(rounded.report);
    layer.report.layer = n.id;
    layer.summary = layer.report.summary_json(false);
    layer.bias = quantize_bias(folded, n, layer.weight_params, qg.grid(n.inputs.at(0)));
    qg.layers.emplace(n.id, std::move(layer));
  }
  return qg;
}

Json params_to_json(const QuantParams& p) {
  Json j;
  j["scheme"] = to_string(p.scheme);
  j["granularity"] = to_string(p.granularity);
  j["bits"] = p.bits;
  j["class"] = to_string(p.set_class);
  j["scale"] = p.scale;
  j["zero_point"] = p.zero_point;
  j["alpha"] = p.alpha;
  j["beta"] = p.beta;
  return j;
}

QuantParams params_from_json(const Json& j) {
  try {
    QuantParams p;
    p.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    p.granularity = granularity_from_string(j.at("granularity").get<std::string>());
    p.bits = j.at("bits").get<int>();
    const auto cls = j.at("class").get<std::string>();
    if (cls != "signed" && cls != "unsigned") throw Error("model_graph.schema", "bad number-set class '" + cls + "'");
    p.set_class = cls == "signed" ? NumberSetClass::Signed : NumberSetClass::Unsigned;
    p.scale = j.at("scale").get<std::vector<float>>();
    p.zero_point = j.at("zero_point").get<std::vector<int>>();
    p.alpha = j.at("alpha").get<std::vector<float>>();
    p.beta = j.at("beta").get<std::vector<float>>();
    if (p.bits < 2 || p.bits > 8 || p.scale.empty() || p.zero_point.size() != p.scale.size() ||
        p.alpha.size() != p.scale.size() || p.beta.size() != p.scale.size()) {
      throw Error("model_graph.schema", "inconsistent quantization params");
    }
    for (float s : p.scale) {
      if (!(s > 0.0f) || !std::isfinite(s)) throw Error("model_graph.schema", "scale must be finite and positive");
    }
    return p;
  } catch (const Json::exception& e) {
    throw Error("model_graph.schema", std::string("bad quantization params: ") + e.what());
  }
}

void save_quantized(const QuantizedGraph& qg, const std::filesystem::path& manifest) {
  auto dir = manifest.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  Json doc = graph_to_json(qg.graph, dir);
  Json& q = doc["quantization"];
  q["config"] = qg.config.to_json();
  q["activations"] = Json::object();
  for (const auto& [id, p] : qg.activations) q["activations"][id] = params_to_json(p);
  q["layers"] = Json::object();
  for (const auto& [id, layer] : qg.layers) {
    Json l;
    l["params"] = params_to_json(layer.weight_params);
    const auto wfile = blob_file_name(id + ".qweight");
    write_blob(dir / wfile, layer.weight);
    l["weight"] = Json{{"dtype", "i8"}, {"shape", layer.weight.shape().dims()}, {"file", wfile}};
    if (!layer.bias.empty()) {
      const auto bfile = blob_file_name(id + ".qbias");
      write_blob(dir / bfile, TensorAcc(Shape{static_cast<std::int64_t>(layer.bias.size())}, layer.bias));
      l["bias"] = Json{{"dtype", "i32"}, {"shape", {layer.bias.size()}}, {"file", bfile}};
    }
    l["calibration"] = layer.summary;
    q["layers"][id] = std::move(l);
  }
  write_text_file(manifest, dump_json(doc));
}

bool is_quantized_manifest(const std::filesystem::path& manifest) {
  auto doc = parse_json(read_text_file(manifest), manifest);
  return doc.is_object() && doc.contains("quantization");
}

QuantizedGraph load_quantized(const std::filesystem::path& manifest) {
  if (!std::filesystem::exists(manifest)) {
    throw Error("model_graph.not_found", "model manifest '" + manifest.string() + "' does not exist");
  }
  const auto dir = manifest.parent_path();
  Json doc = parse_json(read_text_file(manifest), manifest);
  if (!doc.is_object() || !doc.contains("quantization")) {
    throw Error("model_graph.schema", "'" + manifest.string() + "' is not a quantized model");
  }
  Json q = doc["quantization"];
  doc.erase("quantization");
  QuantizedGraph qg;
  qg.graph = graph_from_json(doc, dir);
  try {
    qg.config = QuantConfig::from_json(q.at("config"));
    for (auto it = q.at("activations").begin(); it != q.at("activations").end(); ++it) {
      qg.activations.emplace(it.key(), params_from_json(it.value()));
    }
    for (auto it = q.at("layers").begin(); it != q.at("layers").end(); ++it) {
      const Json& l = it.value();
      QuantizedLayer layer;
      layer.weight_params = params_from_json(l.at("params"));
      const auto wpath = dir / l.at("weight").at("file").get<std::string>();
      if (!std::filesystem::exists(wpath)) {
        throw Error("model_graph.missing_blob", "layer '" + it.key() + "' refers to missing blob '" + wpath.string() + "'");
      }
      layer.weight = read_blob_i8(wpath, layer.weight_params.qmin(), layer.weight_params.qmax());
      if (l.contains("bias")) {
        const auto bpath = dir / l.at("bias").at("file").get<std::string>();
        if (!std::filesystem::exists(bpath)) {
          throw Error("model_graph.missing_blob", "layer '" + it.key() + "' refers to missing blob '" + bpath.string() + "'");
        }
        auto b = read_blob_i32(bpath);
        layer.bias.assign(b.data().begin(), b.data().end());
      }
      layer.report.layer = it.key();
      layer.summary = l.at("calibration");
      layer.report.rounding = layer.summary.at("rounding").get<std::string>();
      qg.layers.emplace(it.key(), std::move(layer));
    }
  } catch (const Json::exception& e) {
    throw Error("model_graph.schema", std::string("bad quantization section: ") + e.what());
  }
  for (const auto& n : qg.graph.nodes) {
    if (n.has_weights() && !qg.layers.contains(n.id)) {
      throw Error("model_graph.schema", "quantized model lacks weights for '" + n.id + "'");
    }
    if (!qg.activations.contains(n.id)) throw Error("model_graph.schema", "quantized model lacks a grid for '" + n.id + "'");
  }
  if (!qg.activations.contains(kGraphInput)) throw Error("model_graph.schema", "quantized model lacks an input grid");
  return qg;
}

}  // namespace isq
