// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "isq/bnfold.hpp"
#include "isq/engine.hpp"
#include "isq/json.hpp"
#include "isq/metrics.hpp"
#include "isq/quantized_graph.hpp"

namespace isq {

/// Everything the `isq` commands accept. The defaults are the preset the tool
/// is built around: 8 bits, symmetric, per-tensor, squant rounding, strict BN
/// folding.
struct Config {
  QuantConfig quant;
  FoldMode fold = FoldMode::Strict;
  std::filesystem::path model;
  std::filesystem::path output;
  std::optional<std::filesystem::path> report;
  std::optional<std::filesystem::path> dataset;
  std::vector<ExecPath> paths;  // empty: chosen from the model
  std::vector<int> bits_list{8};
  bool timing = false;
};

Config preset();

/// Load, fold and quantize per `cfg` (the library form of `isq quantize`).
QuantizedGraph prepare_quantized(const Config& cfg, std::vector<std::string>* fold_warnings = nullptr);

/// Writes <output>/model.json (+ blobs) and <output>/report.json; also the
/// report to cfg.report when set. Returns the report document.
Json cmd_quantize(const Config& cfg, std::ostream& out);
EvalReport cmd_eval(const Config& cfg, std::ostream& out);
CompareTable cmd_compare(const Config& cfg, std::ostream& out);
Json cmd_info(const Config& cfg, std::ostream& out);

/// Full command line, as `isq` runs it. Returns the process exit code:
/// 0 success, 1 internal error, 2 usage or input error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace isq
