// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "isq/tensor.hpp"

namespace isq {

/// Labeled (or unlabeled) evaluation samples. On disk: a directory holding
/// inputs.bin (f32, N x C x H x W) and optionally labels.bin (i32, N).
struct Dataset {
  TensorF inputs;
  std::vector<std::int32_t> labels;  // empty when unlabeled

  std::int64_t size() const { return inputs.shape().rank() ? inputs.shape()[0] : 0; }
  bool labeled() const { return !labels.empty(); }
  /// Samples [begin, end) as one batch.
  TensorF batch(std::int64_t begin, std::int64_t end) const;
};

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& d, const std::filesystem::path& dir);

/// Unlabeled N(0, 1) samples of the given per-sample shape.
Dataset random_dataset(const Shape& sample_shape, std::int64_t count, std::uint64_t seed);

}  // namespace isq
