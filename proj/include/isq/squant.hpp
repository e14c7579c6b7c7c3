// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "isq/json.hpp"
#include "isq/quantizer.hpp"

namespace isq {

/// Rounding of one output channel's scaled weights v = s*w. Integers are on
/// the zero-point-free grid (q - z); `lo`/`hi` are the shifted clip bounds.
struct RoundingState {
  std::vector<double> scaled;
  std::vector<int> q;
  std::vector<double> error;  // scaled - q
  std::vector<bool> flipped;
  std::vector<bool> frozen;   // clipped by the code range; never flipped
  int lo = -127;
  int hi = 127;

  /// EQ: nearest rounding, |error| <= 0.5 for every unclipped element.
  static RoundingState nearest(std::span<const double> scaled, int lo, int hi);
  double error_sum(std::size_t begin, std::size_t end) const;
};

struct KernelRange {
  std::size_t begin;
  std::size_t end;
};

/// Flips needed to bring an error sum E inside [-0.5, 0.5]: ceil(|E| - 0.5).
int required_flips(double error_sum);

/// KQ on elements [begin, end): flips the required number of elements whose
/// error has the sign of the sum, largest magnitude first, lowest index on
/// ties. Returns the number of flips; `satisfied` is false when too few
/// flippable elements exist.
int kernel_flip(RoundingState& st, KernelRange k, bool& satisfied);

/// CQ: flips one more element inside the kernels whose sums lean furthest in
/// the channel sum's direction until the channel |sum| <= 0.5. Returns the
/// number of flips per kernel.
std::vector<int> channel_flip(RoundingState& st, std::span<const KernelRange> kernels, bool& satisfied);

struct KernelStats {
  double ase_before = 0.0;  // |sum e| after nearest rounding
  double ase_after = 0.0;
  int flips = 0;
  bool cq_adjusted = false;  // channel bound took priority over this kernel's
  bool unsatisfied = false;
};

struct ChannelStats {
  double ase_before = 0.0;
  double ase_after = 0.0;
  int cq_flips = 0;
  bool unsatisfied = false;
};

struct CalibReport {
  std::string layer;
  std::string rounding;  // "nearest" or "squant"
  std::vector<KernelStats> kernels;
  std::vector<ChannelStats> channels;
  std::int64_t total_flips = 0;
  double mse = 0.0;  // mean squared error on the scaled grid
  double elapsed_ms = 0.0;
  std::vector<std::string> warnings;

  double max_kernel_ase() const;
  /// Over kernels CQ left alone; KQ bounds these by 0.5.
  double max_unadjusted_kernel_ase() const;
  double mean_kernel_ase() const;
  double max_channel_ase() const;

  /// Summary used in reports. Wall-clock is included only when asked.
  Json summary_json(bool with_timing) const;
};

struct RoundedWeight {
  TensorQ weight;
  CalibReport report;
};

/// Data-free flip rounding (EQ -> KQ -> CQ). Conv OIHW weights use each
/// (o, i) HxW window as a kernel and each o as a channel; fc weights treat
/// each row as a kernel and skip CQ.
RoundedWeight squant_round(const TensorF& weight, const QuantParams& p);

/// Baseline arm: plain quantize(), with the same statistics recorded.
RoundedWeight nearest_round(const TensorF& weight, const QuantParams& p);

}  // namespace isq
