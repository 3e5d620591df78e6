// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "hetmoe/matrix.hpp"
#include "hetmoe/rng.hpp"

namespace hetmoe {

/// Orthonormal token vocabulary, one token per row (size × d).
/// Basis mode returns e_0..e_{size−1}; rotated mode the first rows of a
/// random orthogonal matrix (Gaussian + modified Gram-Schmidt, applied twice).
Matrix build_vocab(std::size_t d, std::size_t size, RngStream& rng, bool rotated = false);

/// Max |G − I| over the Gram matrix of the rows.
double gram_deviation(const Matrix& vocab);

/// A signed vocabulary entry: +o or −o.
struct SignedToken {
  std::size_t id = 0;  // vocabulary row
  int sign = 1;
  friend bool operator==(const SignedToken&, const SignedToken&) = default;
};

/// Binary sequence task with one label-carrying token per sequence.
///
/// Label +1 sequences carry ±o1, label −1 sequences carry ±o2. The positive
/// copy appears with probability α (the rare token) and the negated copy
/// otherwise. The other n−1 tokens are drawn with replacement from the
/// vocabulary minus {o1, o2}.
struct TaskSpec {
  Matrix vocab;  // rows orthonormal
  std::size_t n = 8;
  std::size_t o1 = 0;
  std::size_t o2 = 1;
  double alpha = 0.125;
  /// Test hook: when false α may be anywhere in (0, 1) (symmetric controls).
  bool enforce_alpha_domain = true;

  std::size_t d() const { return vocab.cols(); }
  std::size_t vocab_size() const { return vocab.rows(); }
  /// ParameterError on α outside (0, 1/4), n = 0, o1 == o2, or no irrelevant tokens.
  void validate() const;
  /// +o1, −o1, +o2, −o2.
  std::vector<SignedToken> relevant_tokens() const;
  std::vector<double> vector_of(SignedToken t) const;
};

TaskSpec make_task(std::size_t d, std::size_t vocab_size, std::size_t n, double alpha, RngStream& rng,
                   bool rotated = false);

struct SequenceSample {
  Matrix tokens;                   // n × d
  std::vector<std::size_t> ids;    // vocabulary row per position
  int label = 1;
  SignedToken relevant;
  std::size_t relevant_position = 0;
};

SequenceSample sample_sequence(const TaskSpec& spec, RngStream& rng);

/// Sample conditioned on the relevant token being `v` (label follows from v).
SequenceSample sample_sequence_with(const TaskSpec& spec, SignedToken v, RngStream& rng);

std::vector<SequenceSample> sample_dataset(const TaskSpec& spec, std::size_t count, RngStream& rng);

}  // namespace hetmoe
