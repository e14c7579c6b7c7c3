// SPDX-License-Identifier: Apache-2.0
#include "isq/pipeline.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "isq/blob_io.hpp"
#include "isq/error.hpp"
#include "isq/kernels.hpp"
#include "isq/manifest.hpp"

namespace isq {

Config preset() { return Config{}; }

namespace {

void require_model(const std::filesystem::path& p) {
  if (p.empty()) throw Error("cli.missing_model", "no model path given");
  if (!std::filesystem::is_regular_file(p)) {
    throw Error("model_graph.not_found", "model manifest '" + p.string() + "' does not exist");
  }
}

Graph folded_model(const Config& cfg, std::vector<std::string>* warnings) {
  require_model(cfg.model);
  FoldResult r = fold_bn(load_model(cfg.model), cfg.fold);
  if (warnings) *warnings = r.warnings;
  return std::move(r.graph);
}

std::vector<ExecPath> default_quantized_paths(const QuantizedGraph& qg) {
  bool zero_free = true;
  for (const auto& [id, p] : qg.activations) zero_free = zero_free && p.zero_point_free();
  for (const auto& [id, l] : qg.layers) zero_free = zero_free && l.weight_params.zero_point_free();
  return {ExecPath::Float, ExecPath::FakeQuant, zero_free ? ExecPath::IntSymmetric : ExecPath::IntAffine};
}

void write_report(const std::optional<std::filesystem::path>& path, const Json& doc) {
  if (!path) return;
  if (path->has_parent_path()) std::filesystem::create_directories(path->parent_path());
  write_text_file(*path, dump_json(doc));
}

std::string format(const char* fmt, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

}  // namespace

QuantizedGraph prepare_quantized(const Config& cfg, std::vector<std::string>* fold_warnings) {
  return quantize_graph(folded_model(cfg, fold_warnings), cfg.quant);
}

Json cmd_quantize(const Config& cfg, std::ostream& out) {
  if (cfg.output.empty()) throw Error("cli.missing_output", "quantize needs an output directory (-o)");
  std::vector<std::string> warnings;
  const QuantizedGraph qg = prepare_quantized(cfg, &warnings);
  std::filesystem::create_directories(cfg.output);
  save_quantized(qg, cfg.output / "model.json");

  Json rep;
  rep["model"] = qg.graph.name;
  rep["config"] = qg.config.to_json();
  rep["fold_warnings"] = warnings;
  rep["layers"] = Json::array();
  double total_ms = 0.0;
  for (const auto& n : qg.graph.nodes) {
    if (!n.has_weights()) continue;
    const auto& layer = qg.layer(n.id);
    Json s = layer.summary;
    if (cfg.timing) s["elapsed_ms"] = static_cast<float>(layer.report.elapsed_ms);
    total_ms += layer.report.elapsed_ms;
    rep["layers"].push_back(std::move(s));
  }
  if (cfg.timing) rep["calibration_ms"] = static_cast<float>(total_ms);
  rep["op_counts"] = Json::array();
  for (ExecPath p : default_quantized_paths(qg)) rep["op_counts"].push_back(count_ops(qg, p).to_json());
  write_text_file(cfg.output / "report.json", dump_json(rep));
  write_report(cfg.report, rep);

  for (const auto& w : warnings) out << "warning: " << w << "\n";
  out << "quantized " << qg.graph.name << ": " << qg.config.bits << " bits, " << to_string(qg.config.scheme) << ", "
      << to_string(qg.config.granularity) << ", " << to_string(qg.config.rounding) << " rounding\n";
  for (const auto& s : rep["layers"]) {
    out << "  " << s["layer"].get<std::string>() << ": flips " << s["flips"].get<std::int64_t>() << ", max kernel ASE "
        << format("%.4f", s["max_kernel_ase"].get<float>()) << ", max channel ASE "
        << format("%.4f", s["max_channel_ase"].get<float>()) << "\n";
  }
  out << "wrote " << (cfg.output / "model.json").string() << "\n";
  return rep;
}

EvalReport cmd_eval(const Config& cfg, std::ostream& out) {
  require_model(cfg.model);
  if (!cfg.dataset) throw Error("metrics_eval.missing_dataset", "eval needs --dataset <dir>");
  const Dataset data = load_dataset(*cfg.dataset);
  EvalReport rep;
  if (is_quantized_manifest(cfg.model)) {
    const QuantizedGraph qg = load_quantized(cfg.model);
    EvalOptions opts;
    opts.paths = cfg.paths.empty() ? default_quantized_paths(qg) : cfg.paths;
    opts.timing = cfg.timing;
    rep = evaluate(qg, data, opts);
  } else {
    const bool float_only =
        cfg.paths.empty() || (cfg.paths.size() == 1 && cfg.paths[0] == ExecPath::Float);
    if (float_only) {
      rep = evaluate_float(load_model(cfg.model), data);
    } else {
      EvalOptions opts;
      opts.paths = cfg.paths;
      opts.timing = cfg.timing;
      rep = evaluate(prepare_quantized(cfg), data, opts);
    }
  }
  write_report(cfg.report, rep.to_json());
  out << rep.table();
  return rep;
}

CompareTable cmd_compare(const Config& cfg, std::ostream& out) {
  const Graph g = folded_model(cfg, nullptr);
  for (const auto& n : g.nodes) {
    if (n.is<op::BatchNorm>()) {
      throw Error("bnfold.unfusable", "compare needs a fully folded graph; '" + n.id + "' could not be folded");
    }
  }
  const Dataset probe = cfg.dataset ? load_dataset(*cfg.dataset) : random_dataset(g.input_shape, 64, cfg.quant.seed + 1);
  CompareTable t = compare_roundings(g, cfg.bits_list, cfg.quant, probe);
  write_report(cfg.report, t.to_json());
  out << t.table();
  return t;
}

Json cmd_info(const Config& cfg, std::ostream& out) {
  require_model(cfg.model);
  const bool quantized = is_quantized_manifest(cfg.model);
  const Graph g = quantized ? load_quantized(cfg.model).graph : fold_bn(load_model(cfg.model), FoldMode::Permissive).graph;
  Json info;
  info["model"] = g.name;
  info["quantized"] = quantized;
  info["input_shape"] = g.input_shape.dims();
  info["nodes"] = static_cast<std::int64_t>(g.nodes.size());
  info["layers"] = g.layer_count();
  info["parameters"] = g.parameter_count();
  bool foldable = true;
  for (const auto& n : g.nodes) foldable = foldable && !n.is<op::BatchNorm>();
  if (foldable) {
    info["op_counts"] = Json::object();
    for (ExecPath p : {ExecPath::Float, ExecPath::FakeQuant, ExecPath::IntSymmetric, ExecPath::IntAffine}) {
      info["op_counts"][to_string(p)] = count_ops(g, p, cfg.quant.granularity).to_json();
    }
    const auto per_tensor = count_ops(g, ExecPath::IntSymmetric, Granularity::PerTensor).scale_params;
    const auto per_channel = count_ops(g, ExecPath::IntSymmetric, Granularity::PerChannel).scale_params;
    info["scale_params"] = {{"per-tensor", per_tensor}, {"per-channel", per_channel}, {"delta", per_channel - per_tensor}};
  }
  write_report(cfg.report, info);

  out << "model: " << g.name << (quantized ? " (quantized)" : "") << "\n";
  out << "input: " << g.input_shape.str() << "\n";
  out << "layers: " << g.layer_count() << "\n";
  out << "parameters: " << g.parameter_count() << "\n";
  if (foldable) {
    out << "scale params: per-tensor " << info["scale_params"]["per-tensor"].get<std::int64_t>() << ", per-channel "
        << info["scale_params"]["per-channel"].get<std::int64_t>() << " (delta "
        << info["scale_params"]["delta"].get<std::int64_t>() << ")\n";
    out << "ops per inference (batch 1):\n";
    for (const auto& [path, c] : info["op_counts"].items()) {
      out << "  " << path << ": float MACs " << c["float_macs"].get<std::int64_t>() << ", int MACs "
          << c["int_macs"].get<std::int64_t>() << ", extra int mults " << c["extra_int_mults"].get<std::int64_t>()
          << ", extra int adds " << c["extra_int_adds"].get<std::int64_t>() << ", scales "
          << c["scale_params"].get<std::int64_t>() << ", zero-points " << c["zero_point_params"].get<std::int64_t>()
          << "\n";
    }
  } else {
    out << "op counts unavailable: batchnorm nodes remain after folding\n";
  }
  return info;
}

namespace {

void add_quant_options(CLI::App* cmd, Config& cfg, std::string& scheme, std::string& granularity,
                       std::string& rounding, std::string& fold, bool bits_option = true) {
  if (bits_option) cmd->add_option("--bits", cfg.quant.bits, "Bit-width (2-8)")->check(CLI::Range(2, 8));
  cmd->add_option("--scheme", scheme, "symmetric or asymmetric")->check(CLI::IsMember({"symmetric", "asymmetric"}));
  cmd->add_option("--granularity", granularity, "per-tensor or per-channel")
      ->check(CLI::IsMember({"per-tensor", "per-channel"}));
  cmd->add_option("--rounding", rounding, "nearest or squant")->check(CLI::IsMember({"nearest", "squant"}));
  cmd->add_option("--fold-bn", fold, "strict or permissive")->check(CLI::IsMember({"strict", "permissive"}));
  cmd->add_option("--seed", cfg.quant.seed, "Calibration seed");
  cmd->add_option("--calib-batches", cfg.quant.calib_batches, "Random calibration batches")->check(CLI::PositiveNumber);
  cmd->add_flag("--allow-degenerate", cfg.quant.allow_degenerate, "Use s=1, z=0 for all-zero tensors");
  cmd->add_flag("--timing", cfg.timing, "Include wall-clock figures in reports");
}

std::vector<ExecPath> parse_paths(const std::string& list) {
  std::vector<ExecPath> paths;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) paths.push_back(exec_path_from_string(item));
  }
  if (paths.empty()) throw Error("cli.bad_paths", "--paths needs at least one of float, fake, int, int-affine");
  return paths;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  apply_thread_cap_from_env();
  Config cfg = preset();
  std::string scheme = "symmetric", granularity = "per-tensor", rounding = "squant", fold = "strict", paths, report,
              dataset, bits_list = "6,7,8";

  CLI::App app{"Data-free integer quantization for small CNNs", "isq"};
  app.require_subcommand(1, 1);

  auto* quantize = app.add_subcommand("quantize", "Fold, calibrate and quantize a model");
  quantize->add_option("model", cfg.model, "Model manifest")->required();
  quantize->add_option("-o,--output", cfg.output, "Output directory")->required();
  quantize->add_option("--report", report, "Also write the calibration report here");
  add_quant_options(quantize, cfg, scheme, granularity, rounding, fold);

  auto* eval = app.add_subcommand("eval", "Evaluate execution paths on a dataset");
  eval->add_option("model", cfg.model, "Float or quantized model manifest")->required();
  eval->add_option("--dataset", dataset, "Directory with inputs.bin and labels.bin");
  eval->add_option("--paths", paths, "Comma list of float, fake, int, int-affine");
  eval->add_option("--report", report, "Write the JSON report here");
  add_quant_options(eval, cfg, scheme, granularity, rounding, fold);

  auto* compare = app.add_subcommand("compare", "Nearest vs squant rounding across bit-widths");
  compare->add_option("model", cfg.model, "Float model manifest")->required();
  compare->add_option("--bits", bits_list, "Comma list of bit-widths in [4, 8]");
  compare->add_option("--dataset", dataset, "Labeled dataset (optional)");
  compare->add_option("--report", report, "Write the JSON table here");
  add_quant_options(compare, cfg, scheme, granularity, rounding, fold, false);

  auto* info = app.add_subcommand("info", "Layer, parameter and op counts");
  info->add_option("model", cfg.model, "Model manifest")->required();
  info->add_option("--granularity", granularity, "per-tensor or per-channel")
      ->check(CLI::IsMember({"per-tensor", "per-channel"}));
  info->add_option("--report", report, "Write the JSON summary here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    cfg.quant.scheme = scheme_from_string(scheme);
    cfg.quant.granularity = granularity_from_string(granularity);
    cfg.quant.rounding = rounding_from_string(rounding);
    cfg.fold = fold == "permissive" ? FoldMode::Permissive : FoldMode::Strict;
    if (!report.empty()) cfg.report = report;
    if (!dataset.empty()) cfg.dataset = dataset;
    if (!paths.empty()) cfg.paths = parse_paths(paths);

    if (quantize->parsed()) {
      cmd_quantize(cfg, out);
    } else if (eval->parsed()) {
      cmd_eval(cfg, out);
    } else if (compare->parsed()) {
      cfg.bits_list.clear();
      std::stringstream ss(bits_list);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          std::size_t used = 0;
          cfg.bits_list.push_back(std::stoi(item, &used));
          if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::logic_error&) {
          throw Error("cli.bad_bits", "--bits expects integers, got '" + item + "'");
        }
      }
      if (cfg.bits_list.empty()) throw Error("cli.bad_bits", "--bits needs at least one bit-width");
      cmd_compare(cfg, out);
    } else {
      cmd_info(cfg, out);
    }
    out.flush();
    return 0;
  } catch (const Error& e) {
    err << "isq: error: " << e.what() << "\n";
    return e.kind() == ErrorKind::Input ? 2 : 1;
  } catch (const std::exception& e) {
    err << "isq: error[internal]: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace isq
