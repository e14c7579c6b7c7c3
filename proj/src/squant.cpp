// SPDX-License-Identifier: Apache-2.0
#include "isq/squant.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "isq/error.hpp"

namespace isq {

RoundingState RoundingState::nearest(std::span<const double> scaled, int lo, int hi) {
  RoundingState st;
  st.lo = lo;
  st.hi = hi;
  st.scaled.assign(scaled.begin(), scaled.end());
  st.q.resize(scaled.size());
  st.error.resize(scaled.size());
  st.flipped.assign(scaled.size(), false);
  st.frozen.assign(scaled.size(), false);
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    double r = round_half_away(scaled[i]);
    if (r < lo || r > hi) {
      r = std::clamp(r, double(lo), double(hi));
      st.frozen[i] = true;
    }
    st.q[i] = static_cast<int>(r);
    st.error[i] = scaled[i] - r;
  }
  return st;
}

double RoundingState::error_sum(std::size_t begin, std::size_t end) const {
  return std::accumulate(error.begin() + static_cast<std::ptrdiff_t>(begin),
                         error.begin() + static_cast<std::ptrdiff_t>(end), 0.0);
}

int required_flips(double error_sum) {
  const double m = std::fabs(error_sum);
  return m > 0.5 ? static_cast<int>(std::ceil(m - 0.5)) : 0;
}

namespace {

// Element i can move one step in `dir` (+1 raises q) when its error leans
// that way, it has not moved yet and the new code stays in range.
bool flippable(const RoundingState& st, std::size_t i, int dir) {
  if (st.frozen[i] || st.flipped[i]) return false;
  if (dir > 0 ? !(st.error[i] > 0.0) : !(st.error[i] < 0.0)) return false;
  const int next = st.q[i] + dir;
  return next >= st.lo && next <= st.hi;
}

void flip(RoundingState& st, std::size_t i, int dir) {
  st.q[i] += dir;
  st.error[i] -= dir;
  st.flipped[i] = true;
}

// Candidates ordered by |error| descending, lowest index first on ties.
std::vector<std::size_t> candidates(const RoundingState& st, KernelRange k, int dir) {
  std::vector<std::size_t> idx;
  for (std::size_t i = k.begin; i < k.end; ++i) {
    if (flippable(st, i, dir)) idx.push_back(i);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return std::fabs(st.error[a]) > std::fabs(st.error[b]); });
  return idx;
}

}  // namespace

int kernel_flip(RoundingState& st, KernelRange k, bool& satisfied) {
  const double sum = st.error_sum(k.begin, k.end);
  const int need = required_flips(sum);
  satisfied = true;
  if (need == 0) return 0;
  const int dir = sum > 0.0 ? 1 : -1;
  auto idx = candidates(st, k, dir);
  const int n = std::min<int>(need, static_cast<int>(idx.size()));
  for (int j = 0; j < n; ++j) flip(st, idx[static_cast<std::size_t>(j)], dir);
  satisfied = n == need;
  return n;
}

std::vector<int> channel_flip(RoundingState& st, std::span<const KernelRange> kernels, bool& satisfied) {
  std::vector<int> flips(kernels.size(), 0);
  std::vector<double> sums(kernels.size());
  double total = 0.0;
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    sums[k] = st.error_sum(kernels[k].begin, kernels[k].end);
    total += sums[k];
  }
  int need = required_flips(total);
  satisfied = true;
  if (need == 0) return flips;
  const int dir = total > 0.0 ? 1 : -1;
  while (need > 0) {
    // Kernel whose sum leans furthest in `dir` and still has a candidate.
    std::size_t best = kernels.size();
    std::size_t best_elem = 0;
    for (std::size_t k = 0; k < kernels.size(); ++k) {
      auto idx = candidates(st, kernels[k], dir);
      if (idx.empty()) continue;
      if (best == kernels.size() || sums[k] * dir > sums[best] * dir) {
        best = k;
        best_elem = idx.front();
      }
    }
    if (best == kernels.size()) {
      satisfied = false;
      break;
    }
    flip(st, best_elem, dir);
    sums[best] -= dir;
    ++flips[best];
    --need;
  }
  return flips;
}

double CalibReport::max_kernel_ase() const {
  double m = 0.0;
  for (const auto& k : kernels) m = std::max(m, k.ase_after);
  return m;
}

double CalibReport::max_unadjusted_kernel_ase() const {
  double m = 0.0;
  for (const auto& k : kernels) {
    if (!k.cq_adjusted) m = std::max(m, k.ase_after);
  }
  return m;
}

double CalibReport::mean_kernel_ase() const {
  if (kernels.empty()) return 0.0;
  double s = 0.0;
  for (const auto& k : kernels) s += k.ase_after;
  return s / static_cast<double>(kernels.size());
}

double CalibReport::max_channel_ase() const {
  double m = 0.0;
  for (const auto& c : channels) m = std::max(m, c.ase_after);
  return m;
}

Json CalibReport::summary_json(bool with_timing) const {
  Json j;
  j["layer"] = layer;
  j["rounding"] = rounding;
  j["kernels"] = static_cast<std::int64_t>(kernels.size());
  j["channels"] = static_cast<std::int64_t>(channels.size());
  j["flips"] = total_flips;
  j["max_kernel_ase"] = static_cast<float>(max_kernel_ase());
  j["max_unadjusted_kernel_ase"] = static_cast<float>(max_unadjusted_kernel_ase());
  j["mean_kernel_ase"] = static_cast<float>(mean_kernel_ase());
  j["max_channel_ase"] = static_cast<float>(max_channel_ase());
  j["mse"] = static_cast<float>(mse);
  std::int64_t adjusted = 0, unsatisfied = 0;
  for (const auto& k : kernels) {
    adjusted += k.cq_adjusted ? 1 : 0;
    unsatisfied += k.unsatisfied ? 1 : 0;
  }
  for (const auto& c : channels) unsatisfied += c.unsatisfied ? 1 : 0;
  j["cq_adjusted_kernels"] = adjusted;
  j["unsatisfied_bounds"] = unsatisfied;
  j["warnings"] = warnings;
  if (with_timing) j["elapsed_ms"] = static_cast<float>(elapsed_ms);
  return j;
}

namespace {

struct Layout {
  std::int64_t channels;
  std::int64_t kernels_per_channel;
  std::int64_t kernel_size;
  bool channel_level;
};

Layout layout_of(const Shape& s) {
  if (s.rank() == 4) return {s[0], s[1], s[2] * s[3], true};
  if (s.rank() == 2) return {s[0], 1, s[1], false};
  throw Error("squant.bad_weight", "weights must be OIHW or [out, in], got " + s.str());
}

// Runs the calibrator over every output channel. `flip_enabled` selects
// SQuant (true) or plain nearest rounding with the same bookkeeping.
RoundedWeight round_weight(const TensorF& weight, const QuantParams& p, bool flip_enabled) {
  const auto start = std::chrono::steady_clock::now();
  const Layout L = layout_of(weight.shape());
  if (p.granularity == Granularity::PerChannel && static_cast<std::int64_t>(p.channels()) != L.channels) {
    throw Error("squant.bad_params", "per-channel params do not match " + weight.shape().str());
  }
  const std::int64_t per_channel = L.kernels_per_channel * L.kernel_size;
  const int lo = p.qmin(), hi = p.qmax();

  std::vector<std::int16_t> codes(static_cast<std::size_t>(weight.numel()));
  RoundedWeight out;
  CalibReport& rep = out.report;
  rep.rounding = flip_enabled ? "squant" : "nearest";
  rep.kernels.resize(static_cast<std::size_t>(L.channels * L.kernels_per_channel));
  rep.channels.resize(static_cast<std::size_t>(L.channels));
  std::vector<double> channel_sq(static_cast<std::size_t>(L.channels), 0.0);

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t o = 0; o < L.channels; ++o) {
    const std::size_t c = p.granularity == Granularity::PerTensor ? 0 : static_cast<std::size_t>(o);
    const double s = p.scale[c];
    const int z = p.zero_point[c];
    std::vector<double> scaled(static_cast<std::size_t>(per_channel));
    for (std::int64_t i = 0; i < per_channel; ++i) {
      scaled[static_cast<std::size_t>(i)] = s * static_cast<double>(weight[static_cast<std::size_t>(o * per_channel + i)]);
    }
    RoundingState st = RoundingState::nearest(scaled, lo - z, hi - z);

    std::vector<KernelRange> ranges;
    for (std::int64_t k = 0; k < L.kernels_per_channel; ++k) {
      ranges.push_back({static_cast<std::size_t>(k * L.kernel_size), static_cast<std::size_t>((k + 1) * L.kernel_size)});
    }
    auto& ch = rep.channels[static_cast<std::size_t>(o)];
    ch.ase_before = std::fabs(st.error_sum(0, st.error.size()));
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      auto& ks = rep.kernels[static_cast<std::size_t>(o * L.kernels_per_channel) + k];
      ks.ase_before = std::fabs(st.error_sum(ranges[k].begin, ranges[k].end));
      if (flip_enabled) {
        bool ok = true;
        ks.flips = kernel_flip(st, ranges[k], ok);
        ks.unsatisfied = !ok;
      }
    }
    if (flip_enabled && L.channel_level) {
      bool ok = true;
      auto extra = channel_flip(st, ranges, ok);
      ch.unsatisfied = !ok;
      for (std::size_t k = 0; k < ranges.size(); ++k) {
        auto& ks = rep.kernels[static_cast<std::size_t>(o * L.kernels_per_channel) + k];
        ks.flips += extra[k];
        ch.cq_flips += extra[k];
        ks.cq_adjusted = extra[k] > 0;
      }
    }
    for (std::size_t k = 0; k < ranges.size(); ++k) {
      auto& ks = rep.kernels[static_cast<std::size_t>(o * L.kernels_per_channel) + k];
      ks.ase_after = std::fabs(st.error_sum(ranges[k].begin, ranges[k].end));
    }
    ch.ase_after = std::fabs(st.error_sum(0, st.error.size()));
    double sq = 0.0;
    for (std::size_t i = 0; i < st.q.size(); ++i) {
      codes[static_cast<std::size_t>(o * per_channel) + i] = static_cast<std::int16_t>(st.q[i] + z);
      sq += st.error[i] * st.error[i];
    }
    channel_sq[static_cast<std::size_t>(o)] = sq;
  }

  double sq_total = 0.0;
  for (double v : channel_sq) sq_total += v;
  rep.mse = weight.numel() > 0 ? sq_total / static_cast<double>(weight.numel()) : 0.0;
  for (std::size_t k = 0; k < rep.kernels.size(); ++k) {
    const auto& ks = rep.kernels[k];
    rep.total_flips += ks.flips;
    if (ks.unsatisfied) {
      rep.warnings.push_back("kernel " + std::to_string(k) + " bound unreachable, ASE " + std::to_string(ks.ase_after));
    }
  }
  for (std::size_t c = 0; c < rep.channels.size(); ++c) {
    if (rep.channels[c].unsatisfied) {
      rep.warnings.push_back("channel " + std::to_string(c) + " bound unreachable, ASE " +
                             std::to_string(rep.channels[c].ase_after));
    }
  }
  out.weight = TensorQ(weight.shape(), std::move(codes), lo, hi);
  rep.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace

RoundedWeight squant_round(const TensorF& weight, const QuantParams& p) { return round_weight(weight, p, true); }

RoundedWeight nearest_round(const TensorF& weight, const QuantParams& p) { return round_weight(weight, p, false); }

}  // namespace isq
