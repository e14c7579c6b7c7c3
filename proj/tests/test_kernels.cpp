// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "isq/error.hpp"
#include "isq/kernels.hpp"
#include "support/oracles.hpp"
#include "support/random_graphs.hpp"

using namespace isq;
using namespace isq::testing;

namespace {

TensorQ random_codes(std::mt19937_64& rng, Shape shape, int lo, int hi) {
  std::vector<std::int16_t> v(static_cast<std::size_t>(shape.numel()));
  for (auto& e : v) e = static_cast<std::int16_t>(uniform_int(rng, lo, hi));
  return TensorQ(std::move(shape), std::move(v), lo, hi);
}

struct Case {
  Shape x, w;
  ConvWindow win;
};

Case random_case(std::mt19937_64& rng) {
  const std::int64_t N = uniform_int(rng, 1, 3), C = uniform_int(rng, 1, 5), H = uniform_int(rng, 3, 11),
                     W = uniform_int(rng, 3, 11), O = uniform_int(rng, 1, 6);
  const std::int64_t KH = uniform_int(rng, 1, 3), KW = uniform_int(rng, 1, 3);
  const int s = uniform_int(rng, 1, 3), p = uniform_int(rng, 0, 2);
  return {Shape{N, C, H, W}, Shape{O, C, KH, KW}, ConvWindow{{s, s}, {p, p}}};
}

}  // namespace

TEST_CASE("conv output geometry") {
  CHECK(conv_output_dim(16, 3, 1, 1) == 16);
  CHECK(conv_output_dim(16, 3, 2, 1) == 8);
  CHECK(conv_output_dim(5, 3, 2, 0) == 2);
  CHECK(conv2d_output_shape(Shape{2, 3, 8, 8}, Shape{4, 3, 3, 3}, ConvWindow{{1, 1}, {0, 0}}) == Shape{2, 4, 6, 6});
  CHECK_THROWS_AS(conv2d_output_shape(Shape{1, 2, 8, 8}, Shape{4, 3, 3, 3}, {}), Error);
  CHECK_THROWS_AS(conv2d_output_shape(Shape{1, 3, 2, 2}, Shape{4, 3, 3, 3}, {}), Error);
}

TEST_CASE("f32 conv matches a double-precision loop nest") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 40; ++t) {
    const auto c = random_case(rng);
    const auto x = normal_tensor(rng, c.x, 1.0f);
    const auto w = normal_tensor(rng, c.w, 0.5f);
    const auto bias = normal_vector(rng, static_cast<std::size_t>(c.w[0]), 0.1f);
    const auto y = conv2d_f32(x, w, bias, c.win);
    const auto geo = conv_geometry(c.x, c.w, c.win);
    const auto ref = naive_conv(geo, x.data(), w.data());
    REQUIRE(static_cast<std::size_t>(y.numel()) == ref.size());
    const std::int64_t inner = geo.OH * geo.OW;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const double expect = ref[i] + bias[static_cast<std::size_t>((static_cast<std::int64_t>(i) / inner) % geo.O)];
      CHECK(std::fabs(y[i] - expect) <= 1e-5 * (1.0 + std::fabs(expect)));
    }
  }
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 40; ++t) {
    const auto c = random_case(rng);
    const auto x = normal_tensor(rng, c.x, 1.0f);
    const auto w = normal_tensor(rng, c.w, 0.5f);
    const auto bias = normal_vector(rng, static_cast<std::size_t>(c.w[0]), 0.1f);
    CHECK(conv2d_f32(x, w, bias, c.win).bit_equal(reference::conv2d_f32(x, w, bias, c.win)));

    const auto xq = random_codes(rng, c.x, -128, 127);
    const auto wq = random_codes(rng, c.w, -127, 127);
    const int pad = uniform_int(rng, -5, 5);
    CHECK(conv2d_int(xq, wq, c.win, pad) == reference::conv2d_int(xq, wq, c.win, pad));

    const std::int64_t K = c.x.numel() / c.x[0];
    const auto fw = normal_tensor(rng, Shape{5, K}, 0.3f);
    CHECK(fully_connected_f32(x, fw, {}).bit_equal(reference::fully_connected_f32(x, fw, {})));
    const auto fq = random_codes(rng, Shape{5, K}, -127, 127);
    CHECK(fully_connected_int(xq, fq) == reference::fully_connected_int(xq, fq));
  }
}

TEST_CASE("integer conv equals exact int64 sums, padding reads the pad value") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 40; ++t) {
    const auto c = random_case(rng);
    const auto xq = random_codes(rng, c.x, 0, 255);
    const auto wq = random_codes(rng, c.w, -128, 127);
    const int pad = uniform_int(rng, 0, 255);
    const auto y = conv2d_int(xq, wq, c.win, pad);
    const auto ref = naive_conv<std::span<const std::int16_t>, std::span<const std::int16_t>, std::int64_t>(
        conv_geometry(c.x, c.w, c.win), xq.data(), wq.data(), pad);
    REQUIRE(static_cast<std::size_t>(y.numel()) == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == ref[i]);
  }
}

TEST_CASE("integer accumulators that leave int32 are an error") {
  // 255 * 127 * 70000 taps > 2^31
  const std::int64_t K = 70000;
  TensorQ x(Shape{1, K}, std::vector<std::int16_t>(static_cast<std::size_t>(K), 255), 0, 255);
  TensorQ w(Shape{1, K}, std::vector<std::int16_t>(static_cast<std::size_t>(K), 127), -127, 127);
  try {
    fully_connected_int(x, w);
    FAIL("expected overflow");
  } catch (const Error& e) {
    CHECK(e.code() == "tensor.accumulator_overflow");
    CHECK(e.kind() == ErrorKind::Internal);
  }
  CHECK_THROWS_AS(reference::fully_connected_int(x, w), Error);
}

TEST_CASE("fc flattens trailing dimensions") {
  TensorF x(Shape{1, 2, 1, 2}, {1, 2, 3, 4});
  TensorF w(Shape{2, 4}, {1, 0, 0, 0, 1, 1, 1, 1});
  const std::vector<float> b{0.5f, -1.0f};
  auto y = fully_connected_f32(x, w, b);
  CHECK(y.shape() == Shape{1, 2});
  CHECK(y[0] == 1.5f);
  CHECK(y[1] == 9.0f);
}

TEST_CASE("thread cap from the environment") {
  setenv("ISQ_THREADS", "1", 1);
  apply_thread_cap_from_env();
  CHECK(max_threads() == 1);
  unsetenv("ISQ_THREADS");
}
