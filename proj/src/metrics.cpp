// SPDX-License-Identifier: Apache-2.0
#include "isq/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "isq/error.hpp"

namespace isq {

ErrorNorms error_norms(const TensorF& a, const TensorF& b) {
  if (a.shape() != b.shape()) {
    throw Error("metrics_eval.shape_mismatch", "cannot compare " + a.shape().str() + " with " + b.shape().str(),
                ErrorKind::Internal);
  }
  double linf = 0.0, sq = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    linf = std::max(linf, d);
    sq += d * d;
    abs_sum += d;
  }
  const double n = static_cast<double>(std::max<std::int64_t>(a.numel(), 1));
  return {static_cast<float>(linf), static_cast<float>(std::sqrt(sq)), static_cast<float>(abs_sum / n)};
}

std::vector<std::int32_t> argmax_rows(const TensorF& logits) {
  const std::int64_t rows = logits.shape()[0];
  const std::int64_t cols = logits.numel() / rows;
  std::vector<std::int32_t> out(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto first = logits.data().begin() + r * cols;
    out[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(std::max_element(first, first + cols) - first);
  }
  return out;
}

float top1_accuracy(const std::vector<std::int32_t>& predictions, const std::vector<std::int32_t>& labels) {
  if (predictions.size() != labels.size()) {
    throw Error("metrics_eval.label_mismatch", std::to_string(predictions.size()) + " predictions for " +
                                                   std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw Error("metrics_eval.empty_dataset", "no samples to score");
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<float>(100.0 * static_cast<double>(correct) / static_cast<double>(labels.size()));
}

namespace {

template <typename RunFn>
TensorF run_batched(const Dataset& data, std::int64_t batch_size, RunFn&& run) {
  std::vector<float> all;
  std::vector<std::int64_t> dims;
  for (std::int64_t b = 0; b < data.size(); b += batch_size) {
    const TensorF y = run(data.batch(b, std::min(data.size(), b + batch_size)));
    all.insert(all.end(), y.data().begin(), y.data().end());
    dims = y.shape().dims();
  }
  dims[0] = data.size();
  return TensorF(Shape(dims), std::move(all));
}

void check_dataset(const Graph& g, const Dataset& data) {
  if (data.size() == 0) throw Error("metrics_eval.empty_dataset", "dataset has no samples");
  const auto& ds = data.inputs.shape().dims();
  const auto& gs = g.input_shape.dims();
  if (ds.size() != gs.size() || !std::equal(ds.begin() + 1, ds.end(), gs.begin() + 1)) {
    throw Error("model_graph.input_mismatch",
                "dataset samples " + data.inputs.shape().str() + " do not fit graph input " + g.input_shape.str());
  }
}

PathResult score(ExecPath path, const TensorF& logits, const Dataset& data) {
  PathResult r;
  r.path = path;
  r.predictions = argmax_rows(logits);
  if (data.labeled()) r.accuracy = top1_accuracy(r.predictions, data.labels);
  return r;
}

PathComparison compare(const std::string& name, const TensorF& a, const TensorF& b, const PathResult& ra,
                       const PathResult& rb) {
  PathComparison c;
  c.name = name;
  c.norms = error_norms(a, b);
  c.bit_exact = a.bit_equal(b);
  for (std::size_t i = 0; i < ra.predictions.size(); ++i) {
    c.prediction_mismatches += ra.predictions[i] != rb.predictions[i] ? 1 : 0;
  }
  return c;
}

std::string fixed(std::optional<float> v, bool sign = false) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, sign ? "%+.2f" : "%.2f", static_cast<double>(*v));
  return buf;
}

std::string render(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(rows.at(0).size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) line += "  ";
      // first column left-aligned, numbers right-aligned
      line += c == 0 ? r[c] + std::string(width[c] - r[c].size(), ' ') : std::string(width[c] - r[c].size(), ' ') + r[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << "\n";
  }
  return out.str();
}

Json norms_json(const ErrorNorms& n) { return {{"linf", n.linf}, {"l2", n.l2}, {"mean_abs", n.mean_abs}}; }

ErrorNorms norms_from_json(const Json& j) {
  return {j.at("linf").get<float>(), j.at("l2").get<float>(), j.at("mean_abs").get<float>()};
}

}  // namespace

const PathResult* EvalReport::find(ExecPath p) const {
  for (const auto& r : paths)
    if (r.path == p) return &r;
  return nullptr;
}

Json EvalReport::to_json() const {
  Json j;
  j["model"] = model;
  j["samples"] = samples;
  if (config) j["config"] = config->to_json();
  Json pj = Json::array();
  for (const auto& r : paths) {
    Json e{{"path", to_string(r.path)}, {"predictions", r.predictions}};
    if (r.accuracy) e["accuracy"] = *r.accuracy;
    pj.push_back(std::move(e));
  }
  j["paths"] = std::move(pj);
  Json cj = Json::array();
  for (const auto& c : comparisons) {
    cj.push_back({{"name", c.name},
                  {"norms", norms_json(c.norms)},
                  {"prediction_mismatches", c.prediction_mismatches},
                  {"bit_exact", c.bit_exact}});
  }
  j["comparisons"] = std::move(cj);
  j["layers"] = layers;
  j["op_counts"] = op_counts;
  if (calibration_ms) j["calibration_ms"] = *calibration_ms;
  return j;
}

EvalReport EvalReport::from_json(const Json& j) {
  try {
    EvalReport r;
    r.model = j.at("model").get<std::string>();
    r.samples = j.at("samples").get<std::int64_t>();
    if (j.contains("config")) r.config = QuantConfig::from_json(j.at("config"));
    for (const auto& e : j.at("paths")) {
      PathResult p;
      p.path = exec_path_from_string(e.at("path").get<std::string>());
      p.predictions = e.at("predictions").get<std::vector<std::int32_t>>();
      if (e.contains("accuracy")) p.accuracy = e.at("accuracy").get<float>();
      r.paths.push_back(std::move(p));
    }
    for (const auto& e : j.at("comparisons")) {
      r.comparisons.push_back({e.at("name").get<std::string>(), norms_from_json(e.at("norms")),
                               e.at("prediction_mismatches").get<std::int64_t>(), e.at("bit_exact").get<bool>()});
    }
    r.layers = j.at("layers");
    r.op_counts = j.at("op_counts");
    if (j.contains("calibration_ms")) r.calibration_ms = j.at("calibration_ms").get<float>();
    return r;
  } catch (const Json::exception& e) {
    throw Error("metrics_eval.bad_report", std::string("malformed report: ") + e.what());
  }
}

std::string EvalReport::table() const {
  std::vector<std::vector<std::string>> rows{{"model", "path", "bits", "baseline", "quantized", "delta"}};
  const PathResult* base = find(ExecPath::Float);
  const std::optional<float> baseline = base ? base->accuracy : std::nullopt;
  const std::string bits = config ? std::to_string(config->bits) : "-";
  for (const auto& r : paths) {
    if (r.path == ExecPath::Float) {
      rows.push_back({model, "float", "-", fixed(r.accuracy), "-", "-"});
      continue;
    }
    std::optional<float> delta;
    if (baseline && r.accuracy) delta = *r.accuracy - *baseline;
    rows.push_back({model, to_string(r.path), bits, fixed(baseline), fixed(r.accuracy), fixed(delta, true)});
  }
  std::string out = render(rows);
  for (const auto& c : comparisons) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s: linf %.6g  l2 %.6g  mean_abs %.6g  mismatched predictions %lld%s\n",
                  c.name.c_str(), static_cast<double>(c.norms.linf), static_cast<double>(c.norms.l2),
                  static_cast<double>(c.norms.mean_abs), static_cast<long long>(c.prediction_mismatches),
                  c.bit_exact ? "  (bit-exact)" : "");
    out += buf;
  }
  return out;
}

EvalReport evaluate(const QuantizedGraph& qg, const Dataset& data, const EvalOptions& opts) {
  check_dataset(qg.graph, data);
  if (opts.batch_size < 1) throw Error("metrics_eval.bad_batch", "batch size must be positive");
  EvalReport rep;
  rep.model = qg.graph.name;
  rep.config = qg.config;
  rep.samples = data.size();
  std::vector<TensorF> outputs;
  for (ExecPath p : opts.paths) {
    outputs.push_back(run_batched(data, opts.batch_size, [&](const TensorF& x) { return run_path(qg, p, x); }));
    rep.paths.push_back(score(p, outputs.back(), data));
    rep.op_counts.push_back(count_ops(qg, p).to_json());
  }
  for (std::size_t a = 0; a < outputs.size(); ++a)
    for (std::size_t b = a + 1; b < outputs.size(); ++b) {
      const std::string name = std::string(to_string(opts.paths[b])) + "-vs-" + to_string(opts.paths[a]);
      rep.comparisons.push_back(compare(name, outputs[b], outputs[a], rep.paths[b], rep.paths[a]));
    }
  double ms = 0.0;
  for (const auto& n : qg.graph.nodes) {
    if (!n.has_weights()) continue;
    const auto& layer = qg.layer(n.id);
    Json s = layer.summary;
    if (opts.timing) s["elapsed_ms"] = static_cast<float>(layer.report.elapsed_ms);
    rep.layers.push_back(std::move(s));
    ms += layer.report.elapsed_ms;
  }
  if (opts.timing) rep.calibration_ms = static_cast<float>(ms);
  return rep;
}

EvalReport evaluate_float(const Graph& graph, const Dataset& data, std::int64_t batch_size) {
  check_dataset(graph, data);
  EvalReport rep;
  rep.model = graph.name;
  rep.samples = data.size();
  const TensorF y = run_batched(data, batch_size, [&](const TensorF& x) { return run_float(graph, x); });
  rep.paths.push_back(score(ExecPath::Float, y, data));
  rep.op_counts.push_back(count_ops(graph, ExecPath::Float, Granularity::PerTensor).to_json());
  return rep;
}

Json CompareTable::to_json() const {
  Json j;
  j["model"] = model;
  Json rj = Json::array();
  for (const auto& r : rows) {
    Json e{{"bits", r.bits},
           {"rounding", to_string(r.rounding)},
           {"max_kernel_ase", r.max_kernel_ase},
           {"max_unadjusted_kernel_ase", r.max_unadjusted_kernel_ase},
           {"mean_kernel_ase", r.mean_kernel_ase},
           {"max_channel_ase", r.max_channel_ase},
           {"output_error", norms_json(r.output_error)}};
    if (r.baseline) e["baseline"] = *r.baseline;
    if (r.quantized) e["quantized"] = *r.quantized;
    if (r.delta) e["delta"] = *r.delta;
    rj.push_back(std::move(e));
  }
  j["rows"] = std::move(rj);
  return j;
}

std::string CompareTable::table() const {
  std::vector<std::vector<std::string>> t{
      {"model", "bits", "rounding", "baseline", "quantized", "delta", "kernel_ase", "kq_kernel_ase", "channel_ase",
       "output_l2"}};
  for (const auto& r : rows) {
    char ase[32], kq[32], chan[32], l2[32];
    std::snprintf(ase, sizeof ase, "%.4f", static_cast<double>(r.max_kernel_ase));
    std::snprintf(kq, sizeof kq, "%.4f", static_cast<double>(r.max_unadjusted_kernel_ase));
    std::snprintf(chan, sizeof chan, "%.4f", static_cast<double>(r.max_channel_ase));
    std::snprintf(l2, sizeof l2, "%.5g", static_cast<double>(r.output_error.l2));
    t.push_back({model, std::to_string(r.bits), to_string(r.rounding), fixed(r.baseline), fixed(r.quantized),
                 fixed(r.delta, true), ase, kq, chan, l2});
  }
  return render(t);
}

CompareTable compare_roundings(const Graph& folded, const std::vector<int>& bits, const QuantConfig& base,
                               const Dataset& probe) {
  check_dataset(folded, probe);
  for (int b : bits) {
    if (b < 4 || b > 8) throw Error("metrics_eval.bad_bits", "bit widths must lie in [4, 8], got " + std::to_string(b));
  }
  CompareTable table;
  table.model = folded.name;
  const TensorF reference = run_batched(probe, 64, [&](const TensorF& x) { return run_float(folded, x); });
  const PathResult base_result = score(ExecPath::Float, reference, probe);
  for (int b : bits) {
    for (Rounding rounding : {Rounding::Nearest, Rounding::Squant}) {
      QuantConfig cfg = base;
      cfg.bits = b;
      cfg.rounding = rounding;
      const QuantizedGraph qg = quantize_graph(folded, cfg);
      const TensorF y = run_batched(probe, 64, [&](const TensorF& x) { return run_fake_quant(qg, x); });
      CompareRow row;
      row.bits = b;
      row.rounding = rounding;
      row.output_error = error_norms(y, reference);
      if (probe.labeled()) {
        row.baseline = base_result.accuracy;
        row.quantized = score(ExecPath::FakeQuant, y, probe).accuracy;
        row.delta = *row.quantized - *row.baseline;
      }
      double ase_sum = 0.0;
      std::size_t kernels = 0;
      double max_k = 0.0, max_u = 0.0, max_c = 0.0;
      for (const auto& [id, layer] : qg.layers) {
        for (const auto& k : layer.report.kernels) ase_sum += k.ase_after;
        kernels += layer.report.kernels.size();
        max_k = std::max(max_k, layer.report.max_kernel_ase());
        max_u = std::max(max_u, layer.report.max_unadjusted_kernel_ase());
        max_c = std::max(max_c, layer.report.max_channel_ase());
      }
      row.max_kernel_ase = static_cast<float>(max_k);
      row.max_channel_ase = static_cast<float>(max_c);
      row.max_unadjusted_kernel_ase = static_cast<float>(max_u);
      row.mean_kernel_ase = kernels ? static_cast<float>(ase_sum / static_cast<double>(kernels)) : 0.0f;
      table.rows.push_back(row);
    }
  }
  return table;
}

CalibrationTiming time_calibration(const Graph& folded, const QuantConfig& config, int runs) {
  using clock = std::chrono::steady_clock;
  struct Layer {
    std::string id;
    const TensorF* weight;
    QuantParams params;
  };
  std::vector<Layer> layers;
  for (const auto& n : folded.nodes) {
    if (n.is<op::BatchNorm>()) throw Error("metrics_eval.unfolded_batchnorm", "fold batchnorm before timing");
    if (!n.has_weights()) continue;
    const TensorF& w = folded.param(n, "weight");
    layers.push_back({n.id, &w,
                      compute_params(w, config.bits, config.scheme, config.granularity, NumberSetClass::Signed,
                                     config.allow_degenerate)});
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.empty() ? 0.0 : v[v.size() / 2];
  };
  CalibrationTiming t;
  std::vector<std::vector<double>> per_layer(layers.size());
  std::vector<double> totals;
  for (int r = 0; r < std::max(runs, 1); ++r) {
    const auto start = clock::now();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto t0 = clock::now();
      auto rounded = squant_round(*layers[i].weight, layers[i].params);
      per_layer[i].push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    }
    totals.push_back(std::chrono::duration<double, std::milli>(clock::now() - start).count());
  }
  for (std::size_t i = 0; i < layers.size(); ++i) t.layers.emplace_back(layers[i].id, median(per_layer[i]));
  t.total_ms = median(totals);
  return t;
}

}  // namespace isq
