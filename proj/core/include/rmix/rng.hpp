// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace rmix {

/// Seedable random stream used for every sampling decision in a run.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. All distributions are implemented here rather than taken from
/// <random> because the standard distributions are implementation-defined,
/// which would break cross-platform reproducibility.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer on [0, n). Rejection sampling, no modulo bias.
  std::size_t uniform_index(std::size_t n);
  bool bernoulli(double p);
  double normal();
  /// Marsaglia-Tsang; shape < 1 boosted by U^(1/shape).
  double gamma(double shape);
  /// Gamma-ratio construction: X/(X+Y) with X~Gamma(a), Y~Gamma(b).
  double beta(double a, double b);
  /// Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);

  /// Derives an independent stream; used to split per-purpose streams from
  /// one master seed.
  Rng fork(std::uint64_t stream_id) const;

  /// Textual engine state, restorable with set_state.
  std::string state() const;
  void set_state(const std::string& state);

  bool operator==(const Rng& other) const { return seed_ == other.seed_ && engine_ == other.engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace rmix
