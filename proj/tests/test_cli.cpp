// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "isq/blob_io.hpp"
#include "isq/manifest.hpp"
#include "isq/pipeline.hpp"
#include "support/temp_dir.hpp"

using namespace isq;
using namespace isq::testing;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run isq_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "isq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string model() { return fixture("tinycnn/tinycnn.json").string(); }
std::string eval_set() { return fixture("tinycnn/eval").string(); }

// Every file under a directory, by relative path.
std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), dir).string()] = read_text_file(e.path());
  }
  return files;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(isq_cli({}).code == 2);
  CHECK(isq_cli({"frobnicate"}).code == 2);
  CHECK(isq_cli({"quantize", model()}).code == 2);  // no -o
  CHECK(isq_cli({"quantize", model(), "-o", "x", "--bits", "9"}).code == 2);
  CHECK(isq_cli({"quantize", model(), "-o", "x", "--scheme", "weird"}).code == 2);
  CHECK(isq_cli({"--help"}).code == 0);
}

TEST_CASE("a missing model exits with 2 and names the path") {
  TempDir dir;
  const auto missing = (dir / "nope/model.json").string();
  for (const char* cmd : {"quantize", "eval", "compare", "info"}) {
    std::vector<std::string> args{cmd, missing};
    if (std::string(cmd) == "quantize") args.insert(args.end(), {"-o", (dir / "out").string()});
    if (std::string(cmd) == "eval") args.insert(args.end(), {"--dataset", eval_set()});
    const auto r = isq_cli(args);
    CHECK(r.code == 2);
    CHECK(r.err.rfind("isq: error: model_graph.not_found", 0) == 0);
    CHECK(r.err.find(missing) != std::string::npos);
  }
  const auto r = isq_cli({"eval", model(), "--dataset", (dir / "nodata").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("metrics_eval.missing_dataset") != std::string::npos);
}

TEST_CASE("quantize with no flags applies the preset") {
  TempDir dir;
  const auto r = isq_cli({"quantize", model(), "-o", (dir / "q").string()});
  REQUIRE(r.code == 0);
  const auto qg = load_quantized(dir / "q/model.json");
  const Config p = preset();
  CHECK(qg.config == p.quant);
  CHECK(qg.config.bits == 8);
  CHECK(qg.config.scheme == QuantScheme::Scale);
  CHECK(qg.config.granularity == Granularity::PerTensor);
  CHECK(qg.config.rounding == Rounding::Squant);
  CHECK(p.fold == FoldMode::Strict);
  CHECK(std::filesystem::exists(dir / "q/report.json"));
  for (const auto& n : qg.graph.nodes) CHECK_FALSE(n.is<op::BatchNorm>());

  // The library call produces the same model.
  Config cfg = preset();
  cfg.model = model();
  const auto lib = prepare_quantized(cfg);
  for (const auto& [id, layer] : lib.layers) CHECK(layer.weight == qg.layer(id).weight);
}

TEST_CASE("--bits 7 writes 7-bit artifacts") {
  TempDir dir;
  REQUIRE(isq_cli({"quantize", model(), "-o", (dir / "q").string(), "--bits", "7"}).code == 0);
  const auto qg = load_quantized(dir / "q/model.json");
  CHECK(qg.config.bits == 7);
  for (const auto& [id, layer] : qg.layers) {
    CHECK(layer.weight_params.qmax() == 63);
    for (auto q : layer.weight.data()) CHECK(std::abs(q) <= 63);
  }
  for (const auto& [id, grid] : qg.activations) CHECK(grid.bits == 7);
}

TEST_CASE("quantize then eval reproduces the golden reports byte for byte") {
  TempDir dir;
  REQUIRE(isq_cli({"quantize", model(), "-o", (dir / "q").string()}).code == 0);
  const auto r = isq_cli({"eval", (dir / "q/model.json").string(), "--dataset", eval_set(), "--report",
                          (dir / "eval.json").string()});
  REQUIRE(r.code == 0);
  CHECK(read_text_file(dir / "q/report.json") == read_text_file(test_data("golden/tinycnn_quantize_report.json")));
  CHECK(read_text_file(dir / "eval.json") == read_text_file(test_data("golden/tinycnn_eval_report.json")));
  CHECK(r.out.find("(bit-exact)") != std::string::npos);
}

TEST_CASE("identical runs give identical bytes, whatever the thread count") {
  TempDir dir;
  for (const char* tag : {"a", "b", "c"}) {
    if (std::string(tag) == "c") setenv("ISQ_THREADS", "1", 1);
    const auto out = dir / tag;
    REQUIRE(isq_cli({"quantize", model(), "-o", (out / "q").string(), "--bits", "6"}).code == 0);
    REQUIRE(isq_cli({"eval", (out / "q/model.json").string(), "--dataset", eval_set(), "--report",
                     (out / "eval.json").string()})
                .code == 0);
  }
  unsetenv("ISQ_THREADS");
  CHECK(snapshot(dir / "a") == snapshot(dir / "b"));
  CHECK(snapshot(dir / "a") == snapshot(dir / "c"));
}

TEST_CASE("eval of a float model prints the baseline row only") {
  const auto r = isq_cli({"eval", model(), "--dataset", eval_set()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("float") != std::string::npos);
  CHECK(r.out.find("fake") == std::string::npos);
  CHECK(r.out.find("88.90") != std::string::npos);
}

TEST_CASE("eval --paths fake,int runs the parity comparison") {
  TempDir dir;
  REQUIRE(isq_cli({"quantize", model(), "-o", (dir / "q").string()}).code == 0);
  const auto r = isq_cli({"eval", (dir / "q/model.json").string(), "--dataset", eval_set(), "--paths", "fake,int",
                          "--report", (dir / "r.json").string()});
  REQUIRE(r.code == 0);
  const auto rep = EvalReport::from_json(Json::parse(read_text_file(dir / "r.json")));
  REQUIRE(rep.comparisons.size() == 1);
  CHECK(rep.comparisons[0].name == "int-vs-fake");
  CHECK(rep.comparisons[0].bit_exact);
  CHECK(isq_cli({"eval", (dir / "q/model.json").string(), "--dataset", eval_set(), "--paths", "fake,bogus"}).code == 2);
}

TEST_CASE("asymmetric models evaluate on the affine integer path by default") {
  TempDir dir;
  REQUIRE(isq_cli({"quantize", model(), "-o", (dir / "q").string(), "--scheme", "asymmetric"}).code == 0);
  const auto r = isq_cli({"eval", (dir / "q/model.json").string(), "--dataset", eval_set()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("int-affine") != std::string::npos);
  const auto bad = isq_cli({"eval", (dir / "q/model.json").string(), "--dataset", eval_set(), "--paths", "int"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("engine.zero_point_present") != std::string::npos);
}

TEST_CASE("compare prints a row pair per bit width") {
  TempDir dir;
  const auto r = isq_cli({"compare", model(), "--bits", "6,7,8", "--dataset", eval_set(), "--report",
                          (dir / "c.json").string()});
  REQUIRE(r.code == 0);
  const Json j = Json::parse(read_text_file(dir / "c.json"));
  REQUIRE(j.at("rows").size() == 6);
  std::istringstream lines(r.out);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) rows += line.rfind("tinycnn", 0) == 0 ? 1 : 0;
  CHECK(rows == 6);
  CHECK(isq_cli({"compare", model(), "--bits", "8"}).out.find("squant") != std::string::npos);
  CHECK(isq_cli({"compare", model(), "--bits", "3"}).code == 2);
  CHECK(isq_cli({"compare", model(), "--bits", "6,x"}).code == 2);
}

TEST_CASE("info reports layers, parameters and the per-channel scale delta") {
  TempDir dir;
  const auto r = isq_cli({"info", model(), "--report", (dir / "i.json").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("layers: 4") != std::string::npos);
  const Json j = Json::parse(read_text_file(dir / "i.json"));
  CHECK(j.at("layers") == 4);
  // conv1 8, conv2 16, conv3 16, fc 10 output channels against one scale each.
  CHECK(j.at("scale_params").at("delta") == (8 + 16 + 16 + 10) - 4);
  CHECK(r.out.find("delta 46") != std::string::npos);

  Graph empty;
  empty.name = "empty";
  empty.input_shape = Shape{1, 3, 4, 4};
  save_model(empty, dir / "empty/model.json");
  const auto e = isq_cli({"info", (dir / "empty/model.json").string()});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  CHECK(e.out.find("layers: 0") != std::string::npos);
}
