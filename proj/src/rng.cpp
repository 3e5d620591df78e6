// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/rng.hpp"

#include <cmath>
#include <string>

namespace hetmoe {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id) : seed_(seed), stream_id_(stream_id) {
  std::uint64_t x = mix64(seed) ^ mix64(stream_id + kGolden);
  for (auto& w : s_) {
    x += kGolden;
    w = mix64(x);
  }
  // All-zero state is a fixed point of xoshiro.
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

RngStream RngStream::split(std::uint64_t key) const {
  return RngStream(seed_, mix64(stream_id_ * kGolden + mix64(key + 1)));
}

RngStream RngStream::split(std::initializer_list<std::uint64_t> keys) const {
  std::uint64_t id = stream_id_;
  for (auto k : keys) id = mix64(id * kGolden + mix64(k + 1));
  return RngStream(seed_, id);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw ParameterError("uniform_index: n must be positive");
  const std::uint64_t limit = -n % n;  // 2^64 mod n
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= limit) return r % n;
  }
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double RngStream::normal(double mean, double std) { return mean + std * normal(); }

Matrix gaussian(RngStream& rng, double mean, double std, std::size_t rows, std::size_t cols) {
  if (!(std >= 0.0)) throw ParameterError("gaussian: std must be >= 0, got " + std::to_string(std));
  Matrix m(rows, cols, mean);
  if (std == 0.0) return m;
  for (double& x : m.data()) x = rng.normal(mean, std);
  return m;
}

}  // namespace hetmoe
