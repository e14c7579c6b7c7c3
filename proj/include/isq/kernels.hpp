// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "isq/tensor.hpp"

namespace isq {

struct ConvWindow {
  std::array<int, 2> stride{1, 1};
  std::array<int, 2> pad{0, 0};

  friend bool operator==(const ConvWindow&, const ConvWindow&) = default;
};

/// floor((in + 2*pad - k) / stride) + 1; may be < 1 for invalid geometry.
std::int64_t conv_output_dim(std::int64_t in, std::int64_t k, int stride, int pad);

/// Shape of conv2d(input NCHW, weight OIHW). Throws on channel mismatch or
/// empty output.
Shape conv2d_output_shape(const Shape& input, const Shape& weight, const ConvWindow& window);

// Parallel kernels. Work is split over (batch, output channel); every output
// element is accumulated by one thread in the fixed order
// (input channel, kernel row, kernel column), then the bias is added.
// Float results are therefore bit-identical to the serial reference.

TensorF conv2d_f32(const TensorF& input, const TensorF& weight, std::span<const float> bias, const ConvWindow& window);

/// Exact integer cross-correlation. Out-of-image taps read `pad_value`
/// (0 for symmetric grids, z_x for affine ones). Throws on int32 overflow.
TensorAcc conv2d_int(const TensorQ& input, const TensorQ& weight, const ConvWindow& window, int pad_value = 0);

/// input [N, K] (or any rank, flattened per batch row), weight [O, K].
TensorF fully_connected_f32(const TensorF& input, const TensorF& weight, std::span<const float> bias);
TensorAcc fully_connected_int(const TensorQ& input, const TensorQ& weight);

/// Applies the ISQ_THREADS cap (if set) to the OpenMP runtime.
void apply_thread_cap_from_env();
int max_threads();

namespace reference {

// Serial loop nests with the same per-element accumulation order as the
// parallel kernels. Kept for differential tests and benchmarks.
TensorF conv2d_f32(const TensorF& input, const TensorF& weight, std::span<const float> bias, const ConvWindow& window);
TensorAcc conv2d_int(const TensorQ& input, const TensorQ& weight, const ConvWindow& window, int pad_value = 0);
TensorF fully_connected_f32(const TensorF& input, const TensorF& weight, std::span<const float> bias);
TensorAcc fully_connected_int(const TensorQ& input, const TensorQ& weight);

}  // namespace reference
}  // namespace isq
