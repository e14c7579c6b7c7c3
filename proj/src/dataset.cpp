// SPDX-License-Identifier: Apache-2.0
#include "isq/dataset.hpp"

#include <random>

#include "isq/blob_io.hpp"
#include "isq/error.hpp"

namespace isq {

TensorF Dataset::batch(std::int64_t begin, std::int64_t end) const {
  auto dims = inputs.shape().dims();
  const std::int64_t per = inputs.numel() / dims[0];
  dims[0] = end - begin;
  const auto first = inputs.data().begin() + begin * per;
  return TensorF(Shape(dims), std::vector<float>(first, first + (end - begin) * per));
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto inputs = dir / "inputs.bin";
  const auto labels = dir / "labels.bin";
  if (!std::filesystem::is_directory(dir) || !std::filesystem::exists(inputs)) {
    throw Error("metrics_eval.missing_dataset", "dataset '" + dir.string() + "' has no inputs.bin");
  }
  Dataset d;
  d.inputs = read_blob_f32(inputs);
  if (d.inputs.shape().rank() != 4 || d.inputs.shape()[0] == 0) {
    throw Error("metrics_eval.empty_dataset", "dataset '" + dir.string() + "' must hold a non-empty N x C x H x W batch");
  }
  if (std::filesystem::exists(labels)) {
    const auto l = read_blob_i32(labels);
    d.labels.assign(l.data().begin(), l.data().end());
    if (static_cast<std::int64_t>(d.labels.size()) != d.size()) {
      throw Error("metrics_eval.label_mismatch", "dataset '" + dir.string() + "' has " + std::to_string(d.size()) +
                                                     " inputs but " + std::to_string(d.labels.size()) + " labels");
    }
  }
  return d;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_blob(dir / "inputs.bin", d.inputs);
  if (d.labeled()) {
    write_blob(dir / "labels.bin", TensorAcc(Shape{static_cast<std::int64_t>(d.labels.size())}, d.labels));
  }
}

Dataset random_dataset(const Shape& sample_shape, std::int64_t count, std::uint64_t seed) {
  auto dims = sample_shape.dims();
  dims[0] = count;
  const Shape shape(dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(shape.numel()));
  for (auto& e : v) e = normal(rng);
  return Dataset{TensorF(shape, std::move(v)), {}};
}

}  // namespace isq
