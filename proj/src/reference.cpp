// SPDX-License-Identifier: Apache-2.0
#include <limits>

#include "isq/error.hpp"
#include "isq/kernels.hpp"

namespace isq::reference {

TensorF conv2d_f32(const TensorF& input, const TensorF& weight, std::span<const float> bias, const ConvWindow& window) {
  const Shape out_shape = conv2d_output_shape(input.shape(), weight.shape(), window);
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  std::vector<float> y;
  y.reserve(static_cast<std::size_t>(out_shape.numel()));
  for (std::int64_t n = 0; n < is[0]; ++n)
    for (std::int64_t o = 0; o < ws[0]; ++o)
      for (std::int64_t oh = 0; oh < out_shape[2]; ++oh)
        for (std::int64_t ow = 0; ow < out_shape[3]; ++ow) {
          float acc = 0.0f;
          for (std::int64_t c = 0; c < is[1]; ++c)
            for (std::int64_t kh = 0; kh < ws[2]; ++kh)
              for (std::int64_t kw = 0; kw < ws[3]; ++kw) {
                const auto ih = oh * window.stride[0] - window.pad[0] + kh;
                const auto iw = ow * window.stride[1] - window.pad[1] + kw;
                if (ih < 0 || ih >= is[2] || iw < 0 || iw >= is[3]) continue;
                acc += input[((n * is[1] + c) * is[2] + ih) * is[3] + iw] * weight[((o * ws[1] + c) * ws[2] + kh) * ws[3] + kw];
              }
          y.push_back(acc + (bias.empty() ? 0.0f : bias[o]));
        }
  return TensorF(out_shape, std::move(y));
}

TensorAcc conv2d_int(const TensorQ& input, const TensorQ& weight, const ConvWindow& window, int pad_value) {
  const Shape out_shape = conv2d_output_shape(input.shape(), weight.shape(), window);
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  std::vector<std::int32_t> y;
  y.reserve(static_cast<std::size_t>(out_shape.numel()));
  for (std::int64_t n = 0; n < is[0]; ++n)
    for (std::int64_t o = 0; o < ws[0]; ++o)
      for (std::int64_t oh = 0; oh < out_shape[2]; ++oh)
        for (std::int64_t ow = 0; ow < out_shape[3]; ++ow) {
          std::int64_t acc = 0;
          for (std::int64_t c = 0; c < is[1]; ++c)
            for (std::int64_t kh = 0; kh < ws[2]; ++kh)
              for (std::int64_t kw = 0; kw < ws[3]; ++kw) {
                const auto ih = oh * window.stride[0] - window.pad[0] + kh;
                const auto iw = ow * window.stride[1] - window.pad[1] + kw;
                const bool inside = ih >= 0 && ih < is[2] && iw >= 0 && iw < is[3];
                const std::int64_t xv = inside ? input[((n * is[1] + c) * is[2] + ih) * is[3] + iw] : pad_value;
                acc += xv * weight[((o * ws[1] + c) * ws[2] + kh) * ws[3] + kw];
              }
          if (acc < std::numeric_limits<std::int32_t>::min() || acc > std::numeric_limits<std::int32_t>::max()) {
            throw Error("tensor.accumulator_overflow", "conv2d_int accumulator exceeds the int32 range", ErrorKind::Internal);
          }
          y.push_back(static_cast<std::int32_t>(acc));
        }
  return TensorAcc(out_shape, std::move(y));
}

TensorF fully_connected_f32(const TensorF& input, const TensorF& weight, std::span<const float> bias) {
  const std::int64_t N = input.shape()[0];
  const std::int64_t O = weight.shape()[0], K = weight.shape()[1];
  if (weight.shape().rank() != 2 || input.numel() / N != K) {
    throw Error("tensor.shape_mismatch", "fc input " + input.shape().str() + " does not match weight " + weight.shape().str());
  }
  std::vector<float> y;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o) {
      float acc = 0.0f;
      for (std::int64_t k = 0; k < K; ++k) acc += input[n * K + k] * weight[o * K + k];
      y.push_back(acc + (bias.empty() ? 0.0f : bias[o]));
    }
  return TensorF(Shape{N, O}, std::move(y));
}

TensorAcc fully_connected_int(const TensorQ& input, const TensorQ& weight) {
  const std::int64_t N = input.shape()[0];
  const std::int64_t O = weight.shape()[0], K = weight.shape()[1];
  if (weight.shape().rank() != 2 || input.numel() / N != K) {
    throw Error("tensor.shape_mismatch", "fc input " + input.shape().str() + " does not match weight " + weight.shape().str());
  }
  std::vector<std::int32_t> y;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o) {
      std::int64_t acc = 0;
      for (std::int64_t k = 0; k < K; ++k) acc += static_cast<std::int64_t>(input[n * K + k]) * weight[o * K + k];
      if (acc < std::numeric_limits<std::int32_t>::min() || acc > std::numeric_limits<std::int32_t>::max()) {
        throw Error("tensor.accumulator_overflow", "fully_connected_int accumulator exceeds the int32 range", ErrorKind::Internal);
      }
      y.push_back(static_cast<std::int32_t>(acc));
    }
  return TensorAcc(Shape{N, O}, std::move(y));
}

}  // namespace isq::reference
