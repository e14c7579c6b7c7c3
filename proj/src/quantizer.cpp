// SPDX-License-Identifier: Apache-2.0
#include "isq/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "isq/error.hpp"

namespace isq {

const char* to_string(QuantScheme s) { return s == QuantScheme::Scale ? "symmetric" : "asymmetric"; }
const char* to_string(Granularity g) { return g == Granularity::PerTensor ? "per-tensor" : "per-channel"; }
const char* to_string(NumberSetClass c) { return c == NumberSetClass::Signed ? "signed" : "unsigned"; }

QuantScheme scheme_from_string(const std::string& s) {
  if (s == "symmetric") return QuantScheme::Scale;
  if (s == "asymmetric") return QuantScheme::Affine;
  throw Error("quantizer.bad_scheme", "scheme must be symmetric or asymmetric, got '" + s + "'");
}

Granularity granularity_from_string(const std::string& s) {
  if (s == "per-tensor") return Granularity::PerTensor;
  if (s == "per-channel") return Granularity::PerChannel;
  throw Error("quantizer.bad_granularity", "granularity must be per-tensor or per-channel, got '" + s + "'");
}

double round_half_away(double v) { return std::round(v); }

int QuantParams::qmin() const noexcept {
  if (scheme == QuantScheme::Affine) return -(1 << (bits - 1));
  return set_class == NumberSetClass::Signed ? -((1 << (bits - 1)) - 1) : 0;
}

int QuantParams::qmax() const noexcept {
  if (scheme == QuantScheme::Scale && set_class == NumberSetClass::Unsigned) return (1 << bits) - 1;
  return (1 << (bits - 1)) - 1;
}

bool QuantParams::zero_point_free() const noexcept {
  return std::all_of(zero_point.begin(), zero_point.end(), [](int z) { return z == 0; });
}

namespace {

void check_bits(int bits) {
  if (bits < 2 || bits > 8) throw Error("quantizer.bad_bits", "bit-width must be in [2, 8], got " + std::to_string(bits));
}

struct Single {
  float s;
  int z;
  float alpha;
  float beta;
};

Single single_from_range(float min_value, float max_value, const RangeOptions& o) {
  if (o.set_class == NumberSetClass::Unsigned && min_value < 0.0f) {
    throw Error("quantizer.unsigned_negative", "unsigned number set has negative minimum " + std::to_string(min_value));
  }
  const double levels = std::ldexp(1.0, o.bits) - 1.0;
  double alpha = 0.0, beta = 0.0, s = 0.0;
  int z = 0;
  if (o.scheme == QuantScheme::Scale) {
    alpha = o.set_class == NumberSetClass::Signed ? std::max(std::fabs(double(min_value)), std::fabs(double(max_value)))
                                                  : double(max_value);
    // A signed symmetric set spans [-alpha, alpha] over 2^b - 1 codes, so
    // half of them cover alpha.
    const double span = o.set_class == NumberSetClass::Signed ? std::ldexp(1.0, o.bits - 1) - 1.0 : levels;
    s = alpha > 0.0 ? span / alpha : 0.0;
  } else {
    alpha = std::max(0.0, double(max_value));
    beta = std::min(0.0, double(min_value));
    s = alpha > beta ? levels / (alpha - beta) : 0.0;
  }
  const float sf = static_cast<float>(s);
  if (!(sf > 0.0f) || !std::isfinite(sf)) {
    if (!o.allow_degenerate) {
      throw Error("quantizer.degenerate_range", "number set has an empty range [" + std::to_string(beta) + ", " +
                                                    std::to_string(alpha) + "]");
    }
    return {1.0f, 0, static_cast<float>(alpha), static_cast<float>(beta)};
  }
  if (o.scheme == QuantScheme::Affine) {
    z = static_cast<int>(-round_half_away(beta * double(sf)) - std::ldexp(1.0, o.bits - 1));
  }
  return {sf, z, static_cast<float>(alpha), static_cast<float>(beta)};
}

QuantParams empty_params(const RangeOptions& o, Granularity g) {
  QuantParams p;
  p.scheme = o.scheme;
  p.granularity = g;
  p.bits = o.bits;
  p.set_class = o.scheme == QuantScheme::Affine ? NumberSetClass::Signed : o.set_class;
  return p;
}

void push(QuantParams& p, const Single& one) {
  p.scale.push_back(one.s);
  p.zero_point.push_back(one.z);
  p.alpha.push_back(one.alpha);
  p.beta.push_back(one.beta);
}

}  // namespace

QuantParams params_from_range(float min_value, float max_value, const RangeOptions& opts) {
  check_bits(opts.bits);
  auto p = empty_params(opts, Granularity::PerTensor);
  p.set_class = opts.set_class;
  push(p, single_from_range(min_value, max_value, opts));
  return p;
}

QuantParams compute_params(const TensorF& values, int bits, QuantScheme scheme, Granularity granularity,
                           NumberSetClass set_class, bool allow_degenerate) {
  check_bits(bits);
  if (values.numel() == 0) throw Error("quantizer.empty_set", "cannot quantize an empty number set");
  RangeOptions o{bits, scheme, set_class, allow_degenerate};
  auto p = empty_params(o, granularity);
  p.set_class = set_class;
  const std::int64_t groups = granularity == Granularity::PerTensor ? 1 : values.shape()[0];
  const std::int64_t per_group = values.numel() / groups;
  for (std::int64_t g = 0; g < groups; ++g) {
    auto slice = values.data().subspan(static_cast<std::size_t>(g * per_group), static_cast<std::size_t>(per_group));
    auto [mn, mx] = std::minmax_element(slice.begin(), slice.end());
    push(p, single_from_range(*mn, *mx, o));
  }
  return p;
}

int quantize_value(float x, float s, int z, int lo, int hi) {
  const double r = round_half_away(static_cast<double>(s) * static_cast<double>(x)) + z;
  return static_cast<int>(std::clamp(r, static_cast<double>(lo), static_cast<double>(hi)));
}

float dequantize_value(int q, float s, int z) { return static_cast<float>(q - z) / s; }

namespace {

std::int64_t channel_stride(const Shape& shape, const QuantParams& p) {
  if (p.channels() == 0) throw Error("quantizer.bad_params", "quantization params hold no scale");
  if (p.granularity == Granularity::PerTensor) return shape.numel();
  if (shape[0] != static_cast<std::int64_t>(p.channels())) {
    throw Error("quantizer.bad_params", "per-channel params for " + std::to_string(p.channels()) +
                                            " channels applied to " + shape.str());
  }
  return shape.numel() / shape[0];
}

}  // namespace

TensorQ quantize(const TensorF& values, const QuantParams& p) {
  const auto stride = channel_stride(values.shape(), p);
  const int lo = p.qmin(), hi = p.qmax();
  std::vector<std::int16_t> q(values.data().size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto c = static_cast<std::size_t>(static_cast<std::int64_t>(i) / stride);
    q[i] = static_cast<std::int16_t>(quantize_value(values[i], p.scale[c], p.zero_point[c], lo, hi));
  }
  return TensorQ(values.shape(), std::move(q), lo, hi);
}

TensorF dequantize(const TensorQ& q, const QuantParams& p) {
  const auto stride = channel_stride(q.shape(), p);
  std::vector<float> x(q.data().size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto c = static_cast<std::size_t>(static_cast<std::int64_t>(i) / stride);
    x[i] = dequantize_value(q[i], p.scale[c], p.zero_point[c]);
  }
  return TensorF(q.shape(), std::move(x));
}

}  // namespace isq
