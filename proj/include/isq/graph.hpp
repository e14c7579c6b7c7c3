// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "isq/kernels.hpp"
#include "isq/tensor.hpp"

namespace isq {

namespace op {

struct Conv2d {
  ConvWindow window;
  int groups = 1;
  friend bool operator==(const Conv2d&, const Conv2d&) = default;
};
struct FullyConnected {
  friend bool operator==(const FullyConnected&, const FullyConnected&) = default;
};
struct BatchNorm {
  float epsilon = 1e-5f;
  friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};
struct Relu {
  friend bool operator==(const Relu&, const Relu&) = default;
};
struct MaxPool {
  int kernel = 2;
  int stride = 2;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};
struct AvgPool {
  int kernel = 2;
  int stride = 2;
  friend bool operator==(const AvgPool&, const AvgPool&) = default;
};
struct GlobalAvgPool {
  friend bool operator==(const GlobalAvgPool&, const GlobalAvgPool&) = default;
};
struct Add {
  friend bool operator==(const Add&, const Add&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

}  // namespace op

using NodeKind = std::variant<op::Conv2d, op::FullyConnected, op::BatchNorm, op::Relu, op::MaxPool, op::AvgPool,
                              op::GlobalAvgPool, op::Add, op::Flatten>;

/// Manifest spelling of a kind ("conv2d", "fc", "batchnorm", ...).
std::string kind_name(const NodeKind& kind);

/// Id reserved for the graph input tensor.
inline constexpr const char* kGraphInput = "input";

struct Node {
  std::string id;
  NodeKind kind;
  std::vector<std::string> inputs;
  /// role -> parameter tensor name. Roles: weight, bias (conv/fc);
  /// gamma, beta, mean, var (batchnorm).
  std::map<std::string, std::string> params;

  template <typename T>
  bool is() const noexcept {
    return std::holds_alternative<T>(kind);
  }
  bool has_weights() const noexcept { return is<op::Conv2d>() || is<op::FullyConnected>(); }

  friend bool operator==(const Node&, const Node&) = default;
};

/// A validated, topologically ordered CNN graph with one input and one output.
struct Graph {
  std::string name;
  Shape input_shape;
  std::vector<Node> nodes;
  std::map<std::string, TensorF> params;
  std::string output;

  const Node& node(const std::string& id) const;
  const TensorF& param(const Node& n, const std::string& role) const;
  const TensorF* optional_param(const Node& n, const std::string& role) const;
  /// Ids of nodes that read `id`.
  std::vector<std::string> consumers(const std::string& id) const;
  /// Number of conv + fc nodes.
  int layer_count() const;
  std::int64_t parameter_count() const;

  friend bool operator==(const Graph&, const Graph&) = default;
};

using ShapeTable = std::map<std::string, Shape>;

/// Output shape of every node (plus "input") for the given input shape. The
/// batch dimension may differ from the declared one; C/H/W must match.
ShapeTable shape_inference(const Graph& graph, const Shape& input_shape);

/// Orders nodes topologically (stable w.r.t. the given order) and checks ids,
/// parameter presence and shapes. Throws model_graph.* errors.
void validate_and_sort(Graph& graph);

}  // namespace isq
