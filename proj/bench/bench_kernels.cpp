// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP kernels, f32 and int, on a mid-sized conv.
// Argument: batch size.

#include <benchmark/benchmark.h>

#include <random>

#include "isq/kernels.hpp"
#include "isq/squant.hpp"

namespace {

using namespace isq;

constexpr std::int64_t kC = 32, kO = 32, kH = 28, kW = 28, kK = 3;
const ConvWindow kWindow{{1, 1}, {1, 1}};

TensorF random_f32(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(shape.numel()));
  for (auto& e : v) e = n(rng);
  return TensorF(std::move(shape), std::move(v));
}

TensorQ random_i8(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> u(-127, 127);
  std::vector<std::int16_t> v(static_cast<std::size_t>(shape.numel()));
  for (auto& e : v) e = static_cast<std::int16_t>(u(rng));
  return TensorQ(std::move(shape), std::move(v), -127, 127);
}

template <typename Fn>
void conv_f32(benchmark::State& state, Fn fn) {
  const auto x = random_f32(Shape{state.range(0), kC, kH, kW}, 1);
  const auto w = random_f32(Shape{kO, kC, kK, kK}, 2);
  const std::vector<float> b(kO, 0.1f);
  for (auto _ : state) benchmark::DoNotOptimize(fn(x, w, b, kWindow));
  state.SetItemsProcessed(state.iterations() * state.range(0) * kO * kH * kW * kC * kK * kK);
}

template <typename Fn>
void conv_int(benchmark::State& state, Fn fn) {
  const auto x = random_i8(Shape{state.range(0), kC, kH, kW}, 3);
  const auto w = random_i8(Shape{kO, kC, kK, kK}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(fn(x, w, kWindow, 0));
  state.SetItemsProcessed(state.iterations() * state.range(0) * kO * kH * kW * kC * kK * kK);
}

void BM_conv_f32_reference(benchmark::State& s) { conv_f32(s, reference::conv2d_f32); }
void BM_conv_f32_parallel(benchmark::State& s) { conv_f32(s, isq::conv2d_f32); }
void BM_conv_int_reference(benchmark::State& s) { conv_int(s, reference::conv2d_int); }
void BM_conv_int_parallel(benchmark::State& s) { conv_int(s, isq::conv2d_int); }

void BM_squant_round(benchmark::State& state) {
  const auto w = random_f32(Shape{state.range(0), 64, 3, 3}, 5);
  const auto p = compute_params(w, 8, QuantScheme::Scale, Granularity::PerTensor, NumberSetClass::Signed, false);
  for (auto _ : state) benchmark::DoNotOptimize(squant_round(w, p));
}

BENCHMARK(BM_conv_f32_reference)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_f32_parallel)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_conv_int_reference)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_int_parallel)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_squant_round)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
