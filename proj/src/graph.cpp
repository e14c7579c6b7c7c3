// SPDX-License-Identifier: Apache-2.0
#include "isq/graph.hpp"

#include <set>

#include "isq/error.hpp"

namespace isq {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

[[noreturn]] void shape_error(const Node& n, const std::string& what) {
  throw Error("model_graph.shape_inconsistent", "node '" + n.id + "': " + what);
}

std::vector<std::string> required_roles(const NodeKind& kind) {
  if (std::holds_alternative<op::Conv2d>(kind) || std::holds_alternative<op::FullyConnected>(kind)) return {"weight"};
  if (std::holds_alternative<op::BatchNorm>(kind)) return {"gamma", "beta", "mean", "var"};
  return {};
}

std::set<std::string> allowed_roles(const NodeKind& kind) {
  if (std::holds_alternative<op::Conv2d>(kind) || std::holds_alternative<op::FullyConnected>(kind)) {
    return {"weight", "bias"};
  }
  if (std::holds_alternative<op::BatchNorm>(kind)) return {"gamma", "beta", "mean", "var"};
  return {};
}

Shape pool_shape(const Node& n, const Shape& in, int k, int s) {
  if (in.rank() != 4) shape_error(n, "pooling wants a 4-D input, got " + in.str());
  if (k < 1 || s < 1) shape_error(n, "pool kernel and stride must be >= 1");
  auto oh = conv_output_dim(in[2], k, s, 0);
  auto ow = conv_output_dim(in[3], k, s, 0);
  if (oh < 1 || ow < 1) shape_error(n, "pool window larger than input " + in.str());
  return Shape{in[0], in[1], oh, ow};
}

void expect_vector(const Graph& g, const Node& n, const std::string& role, std::int64_t len) {
  const auto& t = g.param(n, role);
  if (t.shape().rank() != 1 || t.shape()[0] != len) {
    shape_error(n, role + " has shape " + t.shape().str() + ", expected [" + std::to_string(len) + "]");
  }
}

}  // namespace

std::string kind_name(const NodeKind& kind) {
  return std::visit(overloaded{
                        [](const op::Conv2d&) { return "conv2d"; },
                        [](const op::FullyConnected&) { return "fc"; },
                        [](const op::BatchNorm&) { return "batchnorm"; },
                        [](const op::Relu&) { return "relu"; },
                        [](const op::MaxPool&) { return "maxpool"; },
                        [](const op::AvgPool&) { return "avgpool"; },
                        [](const op::GlobalAvgPool&) { return "globalavgpool"; },
                        [](const op::Add&) { return "add"; },
                        [](const op::Flatten&) { return "flatten"; },
                    },
                    kind);
}

const Node& Graph::node(const std::string& id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return n;
  }
  throw Error("model_graph.unknown_node", "no node named '" + id + "'");
}

const TensorF& Graph::param(const Node& n, const std::string& role) const {
  const auto* t = optional_param(n, role);
  if (!t) throw Error("model_graph.missing_param", "node '" + n.id + "' has no '" + role + "' parameter");
  return *t;
}

const TensorF* Graph::optional_param(const Node& n, const std::string& role) const {
  auto r = n.params.find(role);
  if (r == n.params.end()) return nullptr;
  auto t = params.find(r->second);
  if (t == params.end()) {
    throw Error("model_graph.dangling_tensor", "node '" + n.id + "' references missing tensor '" + r->second + "'");
  }
  return &t->second;
}

std::vector<std::string> Graph::consumers(const std::string& id) const {
  std::vector<std::string> out;
  for (const auto& n : nodes) {
    for (const auto& in : n.inputs) {
      if (in == id) {
        out.push_back(n.id);
        break;
      }
    }
  }
  return out;
}

int Graph::layer_count() const {
  int count = 0;
  for (const auto& n : nodes) count += n.has_weights() ? 1 : 0;
  return count;
}

std::int64_t Graph::parameter_count() const {
  std::int64_t count = 0;
  for (const auto& [name, t] : params) count += t.numel();
  return count;
}

ShapeTable shape_inference(const Graph& graph, const Shape& input_shape) {
  if (input_shape.rank() != graph.input_shape.rank()) {
    throw Error("model_graph.input_mismatch", "input " + input_shape.str() + " does not match declared " +
                                                  graph.input_shape.str());
  }
  for (std::size_t i = 1; i < input_shape.rank(); ++i) {
    if (input_shape[i] != graph.input_shape[i]) {
      throw Error("model_graph.input_mismatch", "input " + input_shape.str() + " does not match declared " +
                                                    graph.input_shape.str());
    }
  }
  ShapeTable shapes;
  shapes.emplace(kGraphInput, input_shape);
  for (const auto& n : graph.nodes) {
    std::vector<Shape> ins;
    for (const auto& id : n.inputs) {
      auto it = shapes.find(id);
      if (it == shapes.end()) {
        throw Error("model_graph.dangling_input", "node '" + n.id + "' reads undefined '" + id + "'");
      }
      ins.push_back(it->second);
    }
    const std::size_t want_inputs = n.is<op::Add>() ? 2 : 1;
    if (ins.size() != want_inputs) {
      shape_error(n, kind_name(n.kind) + " takes " + std::to_string(want_inputs) + " input(s), got " +
                         std::to_string(ins.size()));
    }
    const Shape& in = ins[0];
    Shape out = std::visit(
        overloaded{
            [&](const op::Conv2d& c) {
              if (c.groups != 1) throw Error("model_graph.unsupported", "node '" + n.id + "': only groups=1 is supported");
              const auto& w = graph.param(n, "weight");
              Shape s;
              try {
                s = conv2d_output_shape(in, w.shape(), c.window);
              } catch (const Error& e) {
                shape_error(n, e.what());
              }
              if (graph.optional_param(n, "bias")) expect_vector(graph, n, "bias", w.shape()[0]);
              return s;
            },
            [&](const op::FullyConnected&) {
              const auto& w = graph.param(n, "weight");
              if (in.rank() < 2) shape_error(n, "fc wants a batched input, got " + in.str());
              if (w.shape().rank() != 2 || w.shape()[1] != in.numel() / in[0]) {
                shape_error(n, "fc weight " + w.shape().str() + " does not match input " + in.str());
              }
              if (graph.optional_param(n, "bias")) expect_vector(graph, n, "bias", w.shape()[0]);
              return Shape{in[0], w.shape()[0]};
            },
            [&](const op::BatchNorm& bn) {
              if (in.rank() != 2 && in.rank() != 4) shape_error(n, "batchnorm wants a 2-D or 4-D input");
              if (!(bn.epsilon > 0.0f)) shape_error(n, "batchnorm epsilon must be > 0");
              for (const char* role : {"gamma", "beta", "mean", "var"}) expect_vector(graph, n, role, in[1]);
              for (float v : graph.param(n, "var").data()) {
                if (v < 0.0f) shape_error(n, "batchnorm variance must be >= 0");
              }
              return in;
            },
            [&](const op::Relu&) { return in; },
            [&](const op::MaxPool& p) { return pool_shape(n, in, p.kernel, p.stride); },
            [&](const op::AvgPool& p) { return pool_shape(n, in, p.kernel, p.stride); },
            [&](const op::GlobalAvgPool&) {
              if (in.rank() != 4) shape_error(n, "globalavgpool wants a 4-D input");
              return Shape{in[0], in[1], 1, 1};
            },
            [&](const op::Add&) {
              if (ins[0] != ins[1]) shape_error(n, "add operands " + ins[0].str() + " and " + ins[1].str() + " differ");
              return in;
            },
            [&](const op::Flatten&) { return Shape{in[0], in.numel() / in[0]}; },
        },
        n.kind);
    shapes.insert_or_assign(n.id, std::move(out));
  }
  return shapes;
}

void validate_and_sort(Graph& graph) {
  if (graph.input_shape.rank() == 0) throw Error("model_graph.schema", "graph input shape is missing");
  std::set<std::string> ids;
  for (const auto& n : graph.nodes) {
    if (n.id.empty()) throw Error("model_graph.schema", "node with empty id");
    if (n.id == kGraphInput) throw Error("model_graph.schema", "node id 'input' is reserved");
    if (!ids.insert(n.id).second) throw Error("model_graph.duplicate_id", "node id '" + n.id + "' appears twice");
    for (const auto& role : required_roles(n.kind)) {
      if (!n.params.contains(role)) {
        throw Error("model_graph.missing_param", "node '" + n.id + "' needs a '" + role + "' parameter");
      }
    }
    auto allowed = allowed_roles(n.kind);
    for (const auto& [role, name] : n.params) {
      if (!allowed.contains(role)) {
        throw Error("model_graph.schema", "node '" + n.id + "' has unexpected parameter role '" + role + "'");
      }
      if (!graph.params.contains(name)) {
        throw Error("model_graph.dangling_tensor", "node '" + n.id + "' references missing tensor '" + name + "'");
      }
    }
  }
  for (const auto& n : graph.nodes) {
    for (const auto& in : n.inputs) {
      if (in != kGraphInput && !ids.contains(in)) {
        throw Error("model_graph.dangling_input", "node '" + n.id + "' reads undefined '" + in + "'");
      }
    }
  }

  // Stable Kahn ordering: always emit the earliest ready node.
  std::vector<Node> pending = std::move(graph.nodes);
  std::vector<Node> sorted;
  std::set<std::string> defined = {kGraphInput};
  while (!pending.empty()) {
    auto ready = std::find_if(pending.begin(), pending.end(), [&](const Node& n) {
      return std::all_of(n.inputs.begin(), n.inputs.end(), [&](const auto& in) { return defined.contains(in); });
    });
    if (ready == pending.end()) {
      throw Error("model_graph.cyclic_graph", "nodes starting at '" + pending.front().id + "' form a cycle");
    }
    defined.insert(ready->id);
    sorted.push_back(std::move(*ready));
    pending.erase(ready);
  }
  graph.nodes = std::move(sorted);

  if (graph.output.empty() && !graph.nodes.empty()) graph.output = graph.nodes.back().id;
  if (!graph.output.empty() && !ids.contains(graph.output)) {
    throw Error("model_graph.dangling_input", "output '" + graph.output + "' is not a node");
  }
  shape_inference(graph, graph.input_shape);
}

}  // namespace isq
