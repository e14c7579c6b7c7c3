// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "isq/graph.hpp"

namespace isq {

enum class FoldMode { Strict, Permissive };

struct FoldResult {
  Graph graph;
  /// BN nodes left in place (permissive mode only).
  std::vector<std::string> warnings;
};

/// Folds every BatchNorm into the conv/fc that feeds it:
///   w' = w * g / sqrt(var + eps)       (per output channel)
///   b' = beta + (b - mean) * g / sqrt(var + eps)
/// A BN that cannot be folded (producer is not conv/fc, or the producer's
/// output has other readers) throws under Strict and is kept with a warning
/// under Permissive.
FoldResult fold_bn(const Graph& graph, FoldMode mode = FoldMode::Strict);

}  // namespace isq
