// SPDX-License-Identifier: Apache-2.0
#include "isq/kernels.hpp"

#include <omp.h>

#include <cstdlib>
#include <limits>
#include <string>

#include "isq/error.hpp"

namespace isq {

std::int64_t conv_output_dim(std::int64_t in, std::int64_t k, int stride, int pad) {
  auto span = in + 2 * static_cast<std::int64_t>(pad) - k;
  if (span < 0) return 0;
  return span / stride + 1;
}

Shape conv2d_output_shape(const Shape& input, const Shape& weight, const ConvWindow& window) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw Error("tensor.shape_mismatch", "conv2d wants NCHW input and OIHW weight, got " + input.str() + " and " +
                                             weight.str());
  }
  if (input[1] != weight[1]) {
    throw Error("tensor.shape_mismatch", "conv2d input has " + std::to_string(input[1]) +
                                             " channels but weight expects " + std::to_string(weight[1]));
  }
  if (window.stride[0] < 1 || window.stride[1] < 1 || window.pad[0] < 0 || window.pad[1] < 0) {
    throw Error("tensor.bad_window", "conv2d stride must be >= 1 and pad >= 0");
  }
  auto oh = conv_output_dim(input[2], weight[2], window.stride[0], window.pad[0]);
  auto ow = conv_output_dim(input[3], weight[3], window.stride[1], window.pad[1]);
  if (oh < 1 || ow < 1) {
    throw Error("tensor.shape_mismatch", "conv2d of " + input.str() + " with " + weight.str() + " has empty output");
  }
  return Shape{input[0], weight[0], oh, ow};
}

namespace {

void check_bias(std::span<const float> bias, std::int64_t out_channels) {
  if (!bias.empty() && static_cast<std::int64_t>(bias.size()) != out_channels) {
    throw Error("tensor.shape_mismatch", "bias has " + std::to_string(bias.size()) + " entries for " +
                                             std::to_string(out_channels) + " output channels");
  }
}

void check_fc(const Shape& input, const Shape& weight) {
  if (weight.rank() != 2) throw Error("tensor.shape_mismatch", "fc weight must be 2-D, got " + weight.str());
  if (input.numel() / input[0] != weight[1]) {
    throw Error("tensor.shape_mismatch", "fc input " + input.str() + " does not match weight " + weight.str());
  }
}

[[noreturn]] void throw_overflow(const char* op) {
  throw Error("tensor.accumulator_overflow", std::string(op) + " accumulator exceeds the int32 range",
              ErrorKind::Internal);
}

constexpr std::int64_t kI32Min = std::numeric_limits<std::int32_t>::min();
constexpr std::int64_t kI32Max = std::numeric_limits<std::int32_t>::max();

}  // namespace

TensorF conv2d_f32(const TensorF& input, const TensorF& weight, std::span<const float> bias, const ConvWindow& window) {
  const Shape out_shape = conv2d_output_shape(input.shape(), weight.shape(), window);
  check_bias(bias, weight.shape()[0]);
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  const std::int64_t N = is[0], C = is[1], H = is[2], W = is[3];
  const std::int64_t O = ws[0], KH = ws[2], KW = ws[3];
  const std::int64_t OH = out_shape[2], OW = out_shape[3];
  const auto [sh, sw] = window.stride;
  const auto [ph, pw] = window.pad;
  const float* x = input.data().data();
  const float* w = weight.data().data();
  std::vector<float> y(static_cast<std::size_t>(out_shape.numel()));

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t o = 0; o < O; ++o) {
      const float b = bias.empty() ? 0.0f : bias[o];
      for (std::int64_t oh = 0; oh < OH; ++oh) {
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          float acc = 0.0f;
          for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t kh = 0; kh < KH; ++kh) {
              const std::int64_t ih = oh * sh - ph + kh;
              if (ih < 0 || ih >= H) continue;
              const float* xrow = x + ((n * C + c) * H + ih) * W;
              const float* wrow = w + ((o * C + c) * KH + kh) * KW;
              for (std::int64_t kw = 0; kw < KW; ++kw) {
                const std::int64_t iw = ow * sw - pw + kw;
                if (iw < 0 || iw >= W) continue;
                acc += xrow[iw] * wrow[kw];
              }
            }
          }
          y[((n * O + o) * OH + oh) * OW + ow] = acc + b;
        }
      }
    }
  }
  return TensorF(out_shape, std::move(y));
}

TensorAcc conv2d_int(const TensorQ& input, const TensorQ& weight, const ConvWindow& window, int pad_value) {
  const Shape out_shape = conv2d_output_shape(input.shape(), weight.shape(), window);
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  const std::int64_t N = is[0], C = is[1], H = is[2], W = is[3];
  const std::int64_t O = ws[0], KH = ws[2], KW = ws[3];
  const std::int64_t OH = out_shape[2], OW = out_shape[3];
  const auto [sh, sw] = window.stride;
  const auto [ph, pw] = window.pad;
  const std::int16_t* x = input.data().data();
  const std::int16_t* w = weight.data().data();
  std::vector<std::int32_t> y(static_cast<std::size_t>(out_shape.numel()));
  bool overflow = false;

#pragma omp parallel for collapse(2) schedule(static) reduction(|| : overflow)
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t o = 0; o < O; ++o) {
      for (std::int64_t oh = 0; oh < OH; ++oh) {
        for (std::int64_t ow = 0; ow < OW; ++ow) {
          std::int64_t acc = 0;
          for (std::int64_t c = 0; c < C; ++c) {
            for (std::int64_t kh = 0; kh < KH; ++kh) {
              const std::int64_t ih = oh * sh - ph + kh;
              const std::int16_t* wrow = w + ((o * C + c) * KH + kh) * KW;
              for (std::int64_t kw = 0; kw < KW; ++kw) {
                const std::int64_t iw = ow * sw - pw + kw;
                const bool inside = ih >= 0 && ih < H && iw >= 0 && iw < W;
                const std::int64_t xv = inside ? x[((n * C + c) * H + ih) * W + iw] : pad_value;
                acc += xv * wrow[kw];
              }
            }
          }
          if (acc < kI32Min || acc > kI32Max) overflow = true;
          y[((n * O + o) * OH + oh) * OW + ow] = static_cast<std::int32_t>(acc);
        }
      }
    }
  }
  if (overflow) throw_overflow("conv2d_int");
  return TensorAcc(out_shape, std::move(y));
}

TensorF fully_connected_f32(const TensorF& input, const TensorF& weight, std::span<const float> bias) {
  check_fc(input.shape(), weight.shape());
  check_bias(bias, weight.shape()[0]);
  const std::int64_t N = input.shape()[0];
  const std::int64_t O = weight.shape()[0], K = weight.shape()[1];
  const float* x = input.data().data();
  const float* w = weight.data().data();
  std::vector<float> y(static_cast<std::size_t>(N * O));

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t o = 0; o < O; ++o) {
      float acc = 0.0f;
      for (std::int64_t k = 0; k < K; ++k) acc += x[n * K + k] * w[o * K + k];
      y[n * O + o] = acc + (bias.empty() ? 0.0f : bias[o]);
    }
  }
  return TensorF(Shape{N, O}, std::move(y));
}

TensorAcc fully_connected_int(const TensorQ& input, const TensorQ& weight) {
  check_fc(input.shape(), weight.shape());
  const std::int64_t N = input.shape()[0];
  const std::int64_t O = weight.shape()[0], K = weight.shape()[1];
  const std::int16_t* x = input.data().data();
  const std::int16_t* w = weight.data().data();
  std::vector<std::int32_t> y(static_cast<std::size_t>(N * O));
  bool overflow = false;

#pragma omp parallel for collapse(2) schedule(static) reduction(|| : overflow)
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t o = 0; o < O; ++o) {
      std::int64_t acc = 0;
      for (std::int64_t k = 0; k < K; ++k) acc += static_cast<std::int64_t>(x[n * K + k]) * w[o * K + k];
      if (acc < kI32Min || acc > kI32Max) overflow = true;
      y[n * O + o] = static_cast<std::int32_t>(acc);
    }
  }
  if (overflow) throw_overflow("fully_connected_int");
  return TensorAcc(Shape{N, O}, std::move(y));
}

void apply_thread_cap_from_env() {
  const char* env = std::getenv("ISQ_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  long cap = std::strtol(env, &end, 10);
  if (*end != '\0' || cap < 1) throw Error("cli.bad_env", std::string("ISQ_THREADS must be a positive integer, got '") + env + "'");
  if (cap < omp_get_max_threads()) omp_set_num_threads(static_cast<int>(cap));
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace isq
