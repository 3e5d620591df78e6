// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>

#include "hetmoe/matrix.hpp"

namespace hetmoe {

/// Reproducible random stream identified by (seed, stream id).
///
/// Bits come from xoshiro256** whose state is expanded from
/// seed and stream id with SplitMix64. Normal variates use the Marsaglia
/// polar method (the spare variate is cached). No std:: distributions are
/// involved: the integer sequence is identical on every platform, and normal
/// variates depend only on IEEE arithmetic plus std::log.
///
/// A stream is single-owner. Parallel code derives one child stream per
/// work item with split() instead of sharing.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Child stream; a pure function of (seed, stream id, key).
  RngStream split(std::uint64_t key) const;
  RngStream split(std::initializer_list<std::uint64_t> keys) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n); unbiased (rejection sampling).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double std);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// i.i.d. N(mean, std²) matrix, filled row-major. std == 0 gives a constant.
Matrix gaussian(RngStream& rng, double mean, double std, std::size_t rows, std::size_t cols);

/// SplitMix64 finalizer; also used to derive stream ids.
std::uint64_t mix64(std::uint64_t x);

}  // namespace hetmoe
