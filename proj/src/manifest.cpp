// SPDX-License-Identifier: Apache-2.0
#include "isq/manifest.hpp"

#include <set>

#include "isq/blob_io.hpp"
#include "isq/error.hpp"

namespace isq {
namespace {

[[noreturn]] void schema_error(const std::string& what) { throw Error("model_graph.schema", what); }

const Json& field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) schema_error(where + " must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(where + " is missing '" + key + "'");
  return *it;
}

std::string as_string(const Json& j, const std::string& where) {
  if (!j.is_string()) schema_error(where + " must be a string");
  return j.get<std::string>();
}

std::int64_t as_int(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) schema_error(where + " must be an integer");
  return j.get<std::int64_t>();
}

std::array<int, 2> as_pair(const Json& j, const std::string& where) {
  if (j.is_number_integer()) {
    auto v = static_cast<int>(as_int(j, where));
    return {v, v};
  }
  if (!j.is_array() || j.size() != 2) schema_error(where + " must be an integer or a pair");
  return {static_cast<int>(as_int(j[0], where)), static_cast<int>(as_int(j[1], where))};
}

Shape as_shape(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) schema_error(where + " must be a non-empty array");
  std::vector<std::int64_t> dims;
  for (const auto& d : j) {
    auto v = as_int(d, where);
    if (v < 1) schema_error(where + " has a non-positive dimension");
    dims.push_back(v);
  }
  return Shape(std::move(dims));
}

void reject_unknown(const Json& obj, const std::set<std::string>& known, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.contains(it.key())) schema_error(where + " has unknown field '" + it.key() + "'");
  }
}

NodeKind kind_from_json(const std::string& kind, const Json& attrs, const std::string& where) {
  if (!attrs.is_object()) schema_error(where + ".attrs must be an object");
  if (kind == "conv2d") {
    reject_unknown(attrs, {"stride", "pad", "groups"}, where + ".attrs");
    op::Conv2d c;
    if (attrs.contains("stride")) c.window.stride = as_pair(attrs["stride"], where + ".attrs.stride");
    if (attrs.contains("pad")) c.window.pad = as_pair(attrs["pad"], where + ".attrs.pad");
    if (attrs.contains("groups")) c.groups = static_cast<int>(as_int(attrs["groups"], where + ".attrs.groups"));
    if (c.window.stride[0] < 1 || c.window.stride[1] < 1 || c.window.pad[0] < 0 || c.window.pad[1] < 0) {
      schema_error(where + " has invalid stride/pad");
    }
    return c;
  }
  if (kind == "fc") {
    reject_unknown(attrs, {}, where + ".attrs");
    return op::FullyConnected{};
  }
  if (kind == "batchnorm") {
    reject_unknown(attrs, {"epsilon"}, where + ".attrs");
    op::BatchNorm bn;
    if (attrs.contains("epsilon")) {
      if (!attrs["epsilon"].is_number()) schema_error(where + ".attrs.epsilon must be a number");
      bn.epsilon = attrs["epsilon"].get<float>();
    }
    return bn;
  }
  if (kind == "maxpool" || kind == "avgpool") {
    reject_unknown(attrs, {"kernel", "stride"}, where + ".attrs");
    int k = static_cast<int>(as_int(field(attrs, "kernel", where + ".attrs"), where + ".attrs.kernel"));
    int s = attrs.contains("stride") ? static_cast<int>(as_int(attrs["stride"], where + ".attrs.stride")) : k;
    if (k < 1 || s < 1) schema_error(where + " pool kernel/stride must be >= 1");
    if (kind == "maxpool") return op::MaxPool{k, s};
    return op::AvgPool{k, s};
  }
  reject_unknown(attrs, {}, where + ".attrs");
  if (kind == "relu") return op::Relu{};
  if (kind == "globalavgpool") return op::GlobalAvgPool{};
  if (kind == "add") return op::Add{};
  if (kind == "flatten") return op::Flatten{};
  schema_error(where + " has unknown kind '" + kind + "'");
}

Json attrs_to_json(const NodeKind& kind) {
  Json a = Json::object();
  if (auto* c = std::get_if<op::Conv2d>(&kind)) {
    a["stride"] = {c->window.stride[0], c->window.stride[1]};
    a["pad"] = {c->window.pad[0], c->window.pad[1]};
    a["groups"] = c->groups;
  } else if (auto* bn = std::get_if<op::BatchNorm>(&kind)) {
    a["epsilon"] = bn->epsilon;
  } else if (auto* mp = std::get_if<op::MaxPool>(&kind)) {
    a["kernel"] = mp->kernel;
    a["stride"] = mp->stride;
  } else if (auto* ap = std::get_if<op::AvgPool>(&kind)) {
    a["kernel"] = ap->kernel;
    a["stride"] = ap->stride;
  }
  return a;
}

}  // namespace

std::string blob_file_name(const std::string& tensor_name) {
  std::string out;
  for (char ch : tensor_name) {
    bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '.' ||
              ch == '_' || ch == '-';
    out += ok ? ch : '_';
  }
  return out + ".bin";
}

Json parse_json(const std::string& text, const std::filesystem::path& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error("model_graph.schema", "'" + origin.string() + "' is not valid JSON: " + e.what());
  }
}

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

Graph graph_from_json(const Json& doc, const std::filesystem::path& blob_dir) {
  if (!doc.is_object()) schema_error("manifest must be a JSON object");
  reject_unknown(doc, {"name", "input", "output", "nodes", "params"}, "manifest");
  Graph g;
  g.name = as_string(field(doc, "name", "manifest"), "manifest.name");
  g.input_shape = as_shape(field(field(doc, "input", "manifest"), "shape", "manifest.input"), "manifest.input.shape");
  if (doc.contains("output")) g.output = as_string(doc["output"], "manifest.output");

  const Json& params = field(doc, "params", "manifest");
  if (!params.is_array()) schema_error("manifest.params must be an array");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto where = "manifest.params[" + std::to_string(i) + "]";
    const Json& p = params[i];
    reject_unknown(p, {"name", "dtype", "shape", "file"}, where);
    auto name = as_string(field(p, "name", where), where + ".name");
    auto dtype = as_string(field(p, "dtype", where), where + ".dtype");
    if (dtype != "f32") schema_error(where + " float graphs hold f32 tensors only, got '" + dtype + "'");
    auto shape = as_shape(field(p, "shape", where), where + ".shape");
    auto file = as_string(field(p, "file", where), where + ".file");
    const auto path = blob_dir / file;
    if (!std::filesystem::exists(path)) {
      throw Error("model_graph.missing_blob", "tensor '" + name + "' refers to missing blob '" + path.string() + "'");
    }
    auto t = read_blob_f32(path);
    if (t.shape() != shape) {
      throw Error("model_graph.shape_inconsistent", "blob '" + file + "' holds " + t.shape().str() +
                                                        " but the manifest declares " + shape.str());
    }
    if (!g.params.emplace(name, std::move(t)).second) schema_error("tensor '" + name + "' declared twice");
  }

  const Json& nodes = field(doc, "nodes", "manifest");
  if (!nodes.is_array()) schema_error("manifest.nodes must be an array");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto where = "manifest.nodes[" + std::to_string(i) + "]";
    const Json& n = nodes[i];
    reject_unknown(n, {"id", "kind", "attrs", "inputs", "params"}, where);
    Node node;
    node.id = as_string(field(n, "id", where), where + ".id");
    const Json attrs = n.contains("attrs") ? n["attrs"] : Json::object();
    node.kind = kind_from_json(as_string(field(n, "kind", where), where + ".kind"), attrs, where);
    const Json& inputs = field(n, "inputs", where);
    if (!inputs.is_array()) schema_error(where + ".inputs must be an array");
    for (const auto& in : inputs) node.inputs.push_back(as_string(in, where + ".inputs"));
    if (n.contains("params")) {
      const Json& ps = n["params"];
      if (!ps.is_object()) schema_error(where + ".params must be an object");
      for (auto it = ps.begin(); it != ps.end(); ++it) node.params[it.key()] = as_string(it.value(), where + ".params");
    }
    g.nodes.push_back(std::move(node));
  }
  validate_and_sort(g);
  return g;
}

Json graph_to_json(const Graph& graph, const std::filesystem::path& blob_dir) {
  Json doc;
  doc["name"] = graph.name;
  doc["input"]["shape"] = graph.input_shape.dims();
  doc["output"] = graph.output;
  doc["nodes"] = Json::array();
  for (const auto& n : graph.nodes) {
    Json j;
    j["id"] = n.id;
    j["kind"] = kind_name(n.kind);
    j["attrs"] = attrs_to_json(n.kind);
    j["inputs"] = n.inputs;
    j["params"] = Json::object();
    for (const auto& [role, name] : n.params) j["params"][role] = name;
    doc["nodes"].push_back(std::move(j));
  }
  doc["params"] = Json::array();
  for (const auto& [name, t] : graph.params) {
    const auto file = blob_file_name(name);
    write_blob(blob_dir / file, t);
    doc["params"].push_back(Json{{"name", name}, {"dtype", "f32"}, {"shape", t.shape().dims()}, {"file", file}});
  }
  return doc;
}

Graph load_model(const std::filesystem::path& manifest) {
  if (!std::filesystem::exists(manifest)) {
    throw Error("model_graph.not_found", "model manifest '" + manifest.string() + "' does not exist");
  }
  return graph_from_json(parse_json(read_text_file(manifest), manifest), manifest.parent_path());
}

void save_model(const Graph& graph, const std::filesystem::path& manifest) {
  auto dir = manifest.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  write_text_file(manifest, dump_json(graph_to_json(graph, dir)));
}

}  // namespace isq
