// SPDX-License-Identifier: Apache-2.0
#pragma once

// Random BN-free CNN graphs for property tests: 1-6 weighted layers built from
// conv, relu, max/avg pooling, residual add, global pooling, flatten and fc.

#include <cmath>
#include <random>
#include <string>

#include "isq/graph.hpp"

namespace isq::testing {

class GraphBuilder {
 public:
  GraphBuilder(std::string name, Shape input) {
    g_.name = std::move(name);
    g_.input_shape = std::move(input);
  }

  std::string conv(const std::string& src, TensorF weight, std::vector<float> bias, ConvWindow window) {
    Node n{next_id("conv"), op::Conv2d{window, 1}, {src}, {}};
    n.params["weight"] = add_param(n.id + ".weight", std::move(weight));
    if (!bias.empty()) {
      const auto len = static_cast<std::int64_t>(bias.size());
      n.params["bias"] = add_param(n.id + ".bias", TensorF(Shape{len}, std::move(bias)));
    }
    return push(std::move(n));
  }

  std::string fc(const std::string& src, TensorF weight, std::vector<float> bias) {
    Node n{next_id("fc"), op::FullyConnected{}, {src}, {}};
    n.params["weight"] = add_param(n.id + ".weight", std::move(weight));
    if (!bias.empty()) {
      const auto len = static_cast<std::int64_t>(bias.size());
      n.params["bias"] = add_param(n.id + ".bias", TensorF(Shape{len}, std::move(bias)));
    }
    return push(std::move(n));
  }

  std::string batchnorm(const std::string& src, std::vector<float> gamma, std::vector<float> beta,
                        std::vector<float> mean, std::vector<float> var, float eps = 1e-5f) {
    Node n{next_id("bn"), op::BatchNorm{eps}, {src}, {}};
    const auto len = static_cast<std::int64_t>(gamma.size());
    n.params["gamma"] = add_param(n.id + ".gamma", TensorF(Shape{len}, std::move(gamma)));
    n.params["beta"] = add_param(n.id + ".beta", TensorF(Shape{len}, std::move(beta)));
    n.params["mean"] = add_param(n.id + ".mean", TensorF(Shape{len}, std::move(mean)));
    n.params["var"] = add_param(n.id + ".var", TensorF(Shape{len}, std::move(var)));
    return push(std::move(n));
  }

  std::string unary(const std::string& prefix, NodeKind kind, const std::string& src) {
    return push(Node{next_id(prefix), std::move(kind), {src}, {}});
  }

  std::string add(const std::string& a, const std::string& b) { return push(Node{next_id("add"), op::Add{}, {a, b}, {}}); }

  Graph finish(const std::string& output = {}) {
    g_.output = output;
    validate_and_sort(g_);
    return g_;
  }

 private:
  std::string next_id(const std::string& prefix) { return prefix + std::to_string(counter_++); }
  std::string add_param(const std::string& name, TensorF t) {
    g_.params.emplace(name, std::move(t));
    return name;
  }
  std::string push(Node n) {
    g_.nodes.push_back(std::move(n));
    return g_.nodes.back().id;
  }

  Graph g_;
  int counter_ = 0;
};

inline std::vector<float> normal_vector(std::mt19937_64& rng, std::size_t n, float stddev) {
  std::normal_distribution<float> d(0.0f, stddev);
  std::vector<float> v(n);
  for (auto& e : v) e = d(rng);
  return v;
}

inline TensorF normal_tensor(std::mt19937_64& rng, Shape shape, float stddev) {
  const auto n = static_cast<std::size_t>(shape.numel());
  return TensorF(std::move(shape), normal_vector(rng, n, stddev));
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct RandomGraphOptions {
  int min_layers = 1;
  int max_layers = 6;
  std::int64_t batch = 2;
};

/// A random folded graph. The returned graph's input batch is `opts.batch`.
inline Graph random_graph(std::mt19937_64& rng, const RandomGraphOptions& opts = {}) {
  const int layers = uniform_int(rng, opts.min_layers, opts.max_layers);
  std::int64_t C = uniform_int(rng, 1, 4), H = uniform_int(rng, 5, 12), W = uniform_int(rng, 5, 12);
  GraphBuilder b("random", Shape{opts.batch, C, H, W});
  std::string cur = kGraphInput;
  bool spatial = true;
  std::int64_t features = 0;  // when !spatial

  auto conv_weight = [&](std::int64_t out, std::int64_t in, std::int64_t k) {
    const float stddev = 1.0f / std::sqrt(static_cast<float>(in * k * k));
    return normal_tensor(rng, Shape{out, in, k, k}, stddev);
  };
  auto maybe_bias = [&](std::int64_t out) {
    return uniform_int(rng, 0, 3) == 0 ? std::vector<float>{} : normal_vector(rng, static_cast<std::size_t>(out), 0.1f);
  };
  auto maybe_relu = [&](int percent) {
    if (uniform_int(rng, 1, 100) <= percent) cur = b.unary("relu", op::Relu{}, cur);
  };

  for (int l = 0; l < layers; ++l) {
    const bool last = l + 1 == layers;
    const int choice = uniform_int(rng, 0, 99);
    if (!spatial || (last && choice < 30)) {
      // Dense tail.
      if (spatial) {
        if (uniform_int(rng, 0, 1) == 0 && H > 1 && W > 1) {
          cur = b.unary("gap", op::GlobalAvgPool{}, cur);
          H = W = 1;
        }
        cur = b.unary("flatten", op::Flatten{}, cur);
        features = C * H * W;
        spatial = false;
      }
      const std::int64_t out = uniform_int(rng, 2, 10);
      cur = b.fc(cur, normal_tensor(rng, Shape{out, features}, 1.0f / std::sqrt(static_cast<float>(features))),
                 maybe_bias(out));
      features = out;
      if (!last) maybe_relu(60);
      continue;
    }
    if (choice < 20 && H >= 3 && W >= 3) {
      // Residual block: x + conv(x), shape preserving.
      const std::string skip = cur;
      const std::string body = b.conv(cur, conv_weight(C, C, 3), maybe_bias(C), ConvWindow{{1, 1}, {1, 1}});
      cur = b.add(skip, body);
      maybe_relu(70);
      continue;
    }
    const std::int64_t k = std::min<std::int64_t>({uniform_int(rng, 1, 3), H, W});
    const int stride = uniform_int(rng, 1, 2);
    const int pad = k > 1 ? uniform_int(rng, 0, 1) : 0;
    const std::int64_t out = uniform_int(rng, 1, 8);
    ConvWindow win{{stride, stride}, {pad, pad}};
    cur = b.conv(cur, conv_weight(out, C, k), maybe_bias(out), win);
    C = out;
    H = (H + 2 * pad - k) / stride + 1;
    W = (W + 2 * pad - k) / stride + 1;
    if (!last) {
      maybe_relu(65);
      const int pool = uniform_int(rng, 0, 9);
      if (pool == 0 && H >= 2 && W >= 2) {
        cur = b.unary("maxpool", op::MaxPool{2, 2}, cur);
        H /= 2;
        W /= 2;
      } else if (pool == 1 && H >= 2 && W >= 2) {
        cur = b.unary("avgpool", op::AvgPool{2, 2}, cur);
        H /= 2;
        W /= 2;
      }
    }
  }
  return b.finish();
}

inline TensorF random_input(std::mt19937_64& rng, const Graph& g, float stddev = 1.0f) {
  return normal_tensor(rng, g.input_shape, stddev);
}

}  // namespace isq::testing
