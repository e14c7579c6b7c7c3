// SPDX-License-Identifier: Apache-2.0
#include "isq/bnfold.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "isq/error.hpp"

namespace isq {
namespace {

std::vector<double> channel_factors(const Graph& g, const Node& bn) {
  const float eps = std::get<op::BatchNorm>(bn.kind).epsilon;
  auto gamma = g.param(bn, "gamma").data();
  auto var = g.param(bn, "var").data();
  std::vector<double> f(gamma.size());
  for (std::size_t c = 0; c < f.size(); ++c) {
    f[c] = static_cast<double>(gamma[c]) / std::sqrt(static_cast<double>(var[c]) + static_cast<double>(eps));
  }
  return f;
}

std::string foldable_producer(const Graph& g, const Node& bn, std::string& reason) {
  const auto& src = bn.inputs.at(0);
  if (src == kGraphInput) {
    reason = "reads the graph input";
    return {};
  }
  const Node& producer = g.node(src);
  if (!producer.has_weights()) {
    reason = "follows a " + kind_name(producer.kind) + " node";
    return {};
  }
  if (g.consumers(src).size() != 1 || g.output == src) {
    reason = "shares its producer '" + src + "' with other readers";
    return {};
  }
  return src;
}

}  // namespace

FoldResult fold_bn(const Graph& graph, FoldMode mode) {
  FoldResult result;
  Graph& g = result.graph;
  g = graph;

  std::map<std::string, std::string> rename;  // bn id -> producer id
  std::vector<Node> kept;
  for (const auto& n : graph.nodes) {
    if (!n.is<op::BatchNorm>()) {
      kept.push_back(n);
      continue;
    }
    std::string reason;
    auto producer_id = foldable_producer(graph, n, reason);
    if (producer_id.empty()) {
      auto msg = "batchnorm '" + n.id + "' cannot be folded: it " + reason;
      if (mode == FoldMode::Strict) throw Error("bnfold.unfusable", msg);
      result.warnings.push_back(msg);
      kept.push_back(n);
      continue;
    }

    auto producer = std::find_if(kept.begin(), kept.end(), [&](const Node& k) { return k.id == producer_id; });
    const auto factor = channel_factors(graph, n);
    const auto beta = graph.param(n, "beta").data();
    const auto mean = graph.param(n, "mean").data();

    const TensorF& w = graph.param(*producer, "weight");
    const auto out_channels = static_cast<std::size_t>(w.shape()[0]);
    if (factor.size() != out_channels) {
      throw Error("bnfold.shape_mismatch", "batchnorm '" + n.id + "' has " + std::to_string(factor.size()) +
                                               " channels, producer has " + std::to_string(out_channels));
    }
    const std::size_t per_channel = static_cast<std::size_t>(w.numel()) / out_channels;
    std::vector<float> wf(w.data().begin(), w.data().end());
    for (std::size_t o = 0; o < out_channels; ++o) {
      for (std::size_t i = 0; i < per_channel; ++i) {
        auto& v = wf[o * per_channel + i];
        v = static_cast<float>(static_cast<double>(v) * factor[o]);
      }
    }

    const TensorF* b = graph.optional_param(*producer, "bias");
    std::vector<float> bf(out_channels);
    for (std::size_t o = 0; o < out_channels; ++o) {
      const double bias = b ? static_cast<double>((*b)[o]) : 0.0;
      bf[o] = static_cast<float>(static_cast<double>(beta[o]) + (bias - static_cast<double>(mean[o])) * factor[o]);
    }

    // A tensor another node also reads gets a private copy under a new name.
    auto private_name = [&](const std::string& role) {
      auto it = producer->params.find(role);
      if (it != producer->params.end()) {
        std::size_t readers = 0;
        for (const auto& other : graph.nodes) {
          for (const auto& [r, name] : other.params) readers += name == it->second ? 1 : 0;
        }
        if (readers == 1) return;
      }
      std::string name = producer->id + "." + role;
      while (g.params.contains(name)) name += "_";
      producer->params[role] = name;
    };
    private_name("weight");
    private_name("bias");
    g.params.insert_or_assign(producer->params.at("weight"), TensorF(w.shape(), std::move(wf)));
    g.params.insert_or_assign(producer->params.at("bias"),
                              TensorF(Shape{static_cast<std::int64_t>(out_channels)}, std::move(bf)));
    rename[n.id] = producer_id;
  }

  for (auto& n : kept) {
    for (auto& in : n.inputs) {
      if (auto r = rename.find(in); r != rename.end()) in = r->second;
    }
  }
  if (auto r = rename.find(g.output); r != rename.end()) g.output = r->second;
  g.nodes = std::move(kept);

  // Drop tensors no longer referenced (the folded BN statistics).
  std::set<std::string> used;
  for (const auto& n : g.nodes) {
    for (const auto& [role, name] : n.params) used.insert(name);
  }
  std::erase_if(g.params, [&](const auto& kv) { return !used.contains(kv.first); });
  return result;
}

}  // namespace isq
