// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "isq/error.hpp"
#include "isq/squant.hpp"
#include "support/oracles.hpp"
#include "support/random_graphs.hpp"

using namespace isq;
using namespace isq::testing;

namespace {

QuantParams symmetric(const TensorF& w, int bits, Granularity g = Granularity::PerTensor) {
  return compute_params(w, bits, QuantScheme::Scale, g, NumberSetClass::Signed, false);
}

// Unit scale so the weights are the scaled values themselves.
QuantParams unit_scale(int bits = 8) {
  auto p = params_from_range(-1.0f, 1.0f, {bits, QuantScheme::Scale, NumberSetClass::Signed});
  p.scale = {1.0f};
  return p;
}

std::vector<double> scaled_of(const TensorF& w, const QuantParams& p, std::int64_t o) {
  const std::int64_t per = w.numel() / w.shape()[0];
  const double s = p.scale[p.granularity == Granularity::PerTensor ? 0 : static_cast<std::size_t>(o)];
  std::vector<double> v;
  for (std::int64_t i = 0; i < per; ++i) v.push_back(s * static_cast<double>(w[static_cast<std::size_t>(o * per + i)]));
  return v;
}

double error_sum(const std::vector<double>& scaled, const TensorQ& q, std::size_t offset, std::size_t begin,
                 std::size_t end, int z = 0) {
  double e = 0.0;
  for (std::size_t i = begin; i < end; ++i) e += scaled[i] - (q[offset + i] - z);
  return e;
}

}  // namespace

TEST_CASE("three equal errors of 0.4 need one flip, the first element") {
  const TensorF w(Shape{1, 1, 1, 3}, {0.4f, 0.4f, 0.4f});
  const auto p = unit_scale();

  auto near = nearest_round(w, p);
  CHECK(near.weight[0] == 0);
  CHECK(near.weight[1] == 0);
  CHECK(near.weight[2] == 0);
  CHECK(near.report.kernels[0].ase_before == doctest::Approx(1.2).epsilon(1e-6));
  CHECK(near.report.total_flips == 0);

  auto sq = squant_round(w, p);
  CHECK(sq.weight[0] == 1);
  CHECK(sq.weight[1] == 0);
  CHECK(sq.weight[2] == 0);
  CHECK(sq.report.kernels[0].flips == 1);
  CHECK(sq.report.kernels[0].ase_after == doctest::Approx(0.2).epsilon(1e-6));
  CHECK(exhaustive_min_flips({0.4f, 0.4f, 0.4f}, -127, 127) == 1);
}

TEST_CASE("integral weights are left alone") {
  const TensorF w(Shape{2, 2, 1, 2}, {1, -2, 3, 0, 4, 5, -6, 7});
  auto sq = squant_round(w, unit_scale());
  CHECK(sq.report.total_flips == 0);
  CHECK(sq.report.max_kernel_ase() == 0.0);
  CHECK(sq.report.max_channel_ase() == 0.0);
  for (std::size_t i = 0; i < 8; ++i) CHECK(sq.weight[i] == static_cast<int>(w[i]));
}

TEST_CASE("required flips is ceil(|E| - 0.5)") {
  CHECK(required_flips(0.0) == 0);
  CHECK(required_flips(0.5) == 0);
  CHECK(required_flips(-0.5) == 0);
  CHECK(required_flips(0.51) == 1);
  CHECK(required_flips(1.5) == 1);
  CHECK(required_flips(-1.51) == 2);
  CHECK(required_flips(3.2) == 3);
}

TEST_CASE("single-kernel flips match the exhaustive minimum") {
  std::mt19937_64 rng(11);
  int cases = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto n = uniform_int(rng, 3, 16);
    const int bits = uniform_int(rng, 4, 8);
    const TensorF w = normal_tensor(rng, Shape{1, 1, 1, n}, 1.0f);
    const auto p = symmetric(w, bits);
    const auto v = scaled_of(w, p, 0);
    const auto oracle = exhaustive_min_flips(v, p.qmin(), p.qmax());
    REQUIRE(oracle >= 0);

    auto sq = squant_round(w, p);
    const auto& k = sq.report.kernels.at(0);
    CHECK(k.flips == oracle);
    CHECK_FALSE(k.unsatisfied);
    const double e = error_sum(v, sq.weight, 0, 0, v.size());
    CHECK(std::fabs(e) <= 0.5);
    CHECK(k.ase_after == doctest::Approx(std::fabs(e)));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::fabs(v[i] - sq.weight[i]) < 1.0);
    ++cases;
  }
  CHECK(cases == 1000);
}

TEST_CASE("conv channels meet the channel bound and untouched kernels the kernel bound") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 200; ++t) {
    const auto O = uniform_int(rng, 1, 6), I = uniform_int(rng, 1, 6), K = uniform_int(rng, 1, 3);
    const int bits = uniform_int(rng, 4, 8);
    const auto g = uniform_int(rng, 0, 1) ? Granularity::PerChannel : Granularity::PerTensor;
    const TensorF w = normal_tensor(rng, Shape{O, I, K, K}, 0.3f);
    const auto p = symmetric(w, bits, g);
    auto sq = squant_round(w, p);
    auto near = nearest_round(w, p);
    const auto per = static_cast<std::size_t>(I * K * K);
    const auto ksz = static_cast<std::size_t>(K * K);

    REQUIRE(sq.report.kernels.size() == static_cast<std::size_t>(O * I));
    for (std::int64_t o = 0; o < O; ++o) {
      const auto v = scaled_of(w, p, o);
      const std::size_t off = static_cast<std::size_t>(o) * per;
      const double ch = error_sum(v, sq.weight, off, 0, per);
      CHECK(std::fabs(ch) <= 0.5);
      CHECK(sq.report.channels[static_cast<std::size_t>(o)].ase_after == doctest::Approx(std::fabs(ch)));
      CHECK(sq.report.channels[static_cast<std::size_t>(o)].ase_before ==
            doctest::Approx(std::fabs(error_sum(v, near.weight, off, 0, per))));
      for (std::int64_t i = 0; i < I; ++i) {
        const auto& ks = sq.report.kernels[static_cast<std::size_t>(o * I + i)];
        const double e = error_sum(v, sq.weight, off, static_cast<std::size_t>(i) * ksz,
                                   static_cast<std::size_t>(i + 1) * ksz);
        CHECK(ks.ase_after == doctest::Approx(std::fabs(e)));
        // CQ adds at most one flip per kernel on top of KQ.
        CHECK(std::fabs(e) <= (ks.cq_adjusted ? 1.0 : 0.5));
      }
    }
    CHECK(sq.report.max_unadjusted_kernel_ase() <= 0.5);
    CHECK(sq.report.max_channel_ase() <= 0.5);
    CHECK(sq.report.warnings.empty());
    for (std::size_t i = 0; i < sq.weight.data().size(); ++i) {
      CHECK(std::abs(sq.weight[i] - near.weight[i]) <= 1);
    }
  }
}

TEST_CASE("kernel flips take the largest errors of the sum's sign") {
  const std::vector<double> v{0.3, -0.45, 0.2, 0.49, 0.35, 0.1};  // E = 0.99
  auto st = RoundingState::nearest(v, -127, 127);
  bool ok = false;
  CHECK(kernel_flip(st, {0, v.size()}, ok) == 1);
  CHECK(ok);
  CHECK(st.q == std::vector<int>{0, 0, 0, 1, 0, 0});
  CHECK(std::fabs(st.error_sum(0, v.size())) <= 0.5);
}

TEST_CASE("channel flips go to the kernel leaning furthest") {
  // Three kernels with sums 0.4, 0.45, 0.3: each within KQ, channel sum 1.15.
  const std::vector<double> v{0.2, 0.2, 0.25, 0.2, 0.1, 0.2};
  auto st = RoundingState::nearest(v, -127, 127);
  const std::vector<KernelRange> ks{{0, 2}, {2, 4}, {4, 6}};
  bool ok = true;
  for (auto k : ks) CHECK(kernel_flip(st, k, ok) == 0);
  auto flips = channel_flip(st, ks, ok);
  CHECK(ok);
  CHECK(flips == std::vector<int>{0, 1, 0});
  CHECK(st.q[2] == 1);
  CHECK(std::fabs(st.error_sum(0, 6)) <= 0.5);
}

TEST_CASE("fc rows are kernels and skip the channel pass") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 100; ++t) {
    const auto O = uniform_int(rng, 1, 8), I = uniform_int(rng, 3, 16);
    const TensorF w = normal_tensor(rng, Shape{O, I}, 0.5f);
    const auto p = symmetric(w, uniform_int(rng, 4, 8));
    auto sq = squant_round(w, p);
    REQUIRE(sq.report.kernels.size() == static_cast<std::size_t>(O));
    for (std::int64_t o = 0; o < O; ++o) {
      const auto v = scaled_of(w, p, o);
      CHECK(sq.report.kernels[static_cast<std::size_t>(o)].flips == exhaustive_min_flips(v, p.qmin(), p.qmax()));
      CHECK(std::fabs(error_sum(v, sq.weight, static_cast<std::size_t>(o * I), 0, v.size())) <= 0.5);
      CHECK_FALSE(sq.report.kernels[static_cast<std::size_t>(o)].cq_adjusted);
      CHECK(sq.report.channels[static_cast<std::size_t>(o)].cq_flips == 0);
    }
  }
}

TEST_CASE("nearest rounding equals quantize") {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 50; ++t) {
    const TensorF w = normal_tensor(rng, Shape{uniform_int(rng, 1, 5), uniform_int(rng, 1, 5), 3, 3}, 1.0f);
    const auto p = symmetric(w, uniform_int(rng, 2, 8), uniform_int(rng, 0, 1) ? Granularity::PerChannel
                                                                               : Granularity::PerTensor);
    auto near = nearest_round(w, p);
    const auto q = quantize(w, p);
    CHECK(std::equal(q.data().begin(), q.data().end(), near.weight.data().begin()));
    CHECK(near.report.rounding == "nearest");
    for (std::size_t i = 0; i < q.data().size(); ++i) {
      const std::size_t c = p.granularity == Granularity::PerTensor ? 0 : i / 9 / static_cast<std::size_t>(w.shape()[1]);
      CHECK(std::fabs(double(p.scale[c]) * w[i] - q[i]) <= 0.5);
    }
  }
}

TEST_CASE("affine weights are flipped on the shifted grid") {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 100; ++t) {
    const auto n = uniform_int(rng, 3, 12);
    TensorF w = normal_tensor(rng, Shape{1, 1, 1, n}, 1.0f);
    const auto p = compute_params(w, uniform_int(rng, 4, 8), QuantScheme::Affine, Granularity::PerTensor,
                                  NumberSetClass::Signed, false);
    auto sq = squant_round(w, p);
    const auto v = scaled_of(w, p, 0);
    const int z = p.zero_point[0];
    CHECK(sq.report.kernels[0].flips == exhaustive_min_flips(v, p.qmin() - z, p.qmax() - z));
    CHECK(std::fabs(error_sum(v, sq.weight, 0, 0, v.size(), z)) <= 0.5);
    for (auto q : sq.weight.data()) {
      CHECK(q >= p.qmin());
      CHECK(q <= p.qmax());
    }
  }
}

TEST_CASE("clipped elements are frozen and an unreachable bound is reported") {
  // Scale 1 on 2 bits: codes [-1, 1]. Both elements clip, so nothing may flip.
  const TensorF w(Shape{1, 1, 1, 2}, {3.4f, 2.3f});
  auto p = unit_scale(2);
  auto sq = squant_round(w, p);
  CHECK(sq.weight[0] == 1);
  CHECK(sq.weight[1] == 1);
  CHECK(sq.report.kernels[0].flips == 0);
  CHECK(sq.report.kernels[0].unsatisfied);
  CHECK(sq.report.kernels[0].ase_after == doctest::Approx(3.7).epsilon(1e-6));
  CHECK_FALSE(sq.report.warnings.empty());
  CHECK(sq.report.summary_json(false).at("unsatisfied_bounds") == 2);  // kernel and channel
  CHECK(exhaustive_min_flips({3.4, 2.3}, -1, 1) == -1);
}

TEST_CASE("a flip never leaves the code range") {
  // 0.4 rounds to 0; 1.4 rounds to 1 = qmax and cannot move up.
  const TensorF w(Shape{1, 1, 1, 3}, {1.4f, 0.4f, 0.4f});
  auto sq = squant_round(w, unit_scale(2));
  CHECK(sq.weight[0] == 1);
  CHECK(sq.weight[1] == 1);
  CHECK(sq.weight[2] == 0);
  CHECK(sq.report.kernels[0].flips == 1);
}

TEST_CASE("calibration is deterministic and reports timing only on request") {
  std::mt19937_64 rng(16);
  const TensorF w = normal_tensor(rng, Shape{8, 4, 3, 3}, 0.2f);
  const auto p = symmetric(w, 6);
  auto a = squant_round(w, p);
  auto b = squant_round(w, p);
  CHECK(std::equal(a.weight.data().begin(), a.weight.data().end(), b.weight.data().begin()));
  CHECK(a.report.summary_json(false) == b.report.summary_json(false));
  CHECK_FALSE(a.report.summary_json(false).contains("elapsed_ms"));
  CHECK(a.report.summary_json(true).contains("elapsed_ms"));
  CHECK(a.report.elapsed_ms >= 0.0);
}

TEST_CASE("weights must be conv or fc shaped") {
  const TensorF bad(Shape{2, 2, 2}, std::vector<float>(8, 0.5f));
  CHECK_THROWS_AS(squant_round(bad, unit_scale()), Error);
}
