// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hetmoe {

Matrix build_vocab(std::size_t d, std::size_t size, RngStream& rng, bool rotated) {
  if (size > d) {
    throw ParameterError("build_vocab: vocabulary size " + std::to_string(size) + " exceeds dimension " +
                         std::to_string(d));
  }
  Matrix v(size, d);
  if (!rotated) {
    for (std::size_t i = 0; i < size; ++i) v(i, i) = 1.0;
    return v;
  }
  v = gaussian(rng, 0.0, 1.0, size, d);
  for (std::size_t i = 0; i < size; ++i) {
    auto vi = v.row(i);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        const auto vj = v.row(j);
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += vi[c] * vj[c];
        for (std::size_t c = 0; c < d; ++c) vi[c] -= dot * vj[c];
      }
    }
    const double norm = l2_norm(vi);
    for (double& x : vi) x /= norm;
  }
  return v;
}

double gram_deviation(const Matrix& vocab) {
  double worst = 0.0;
  for (std::size_t i = 0; i < vocab.rows(); ++i)
    for (std::size_t j = 0; j < vocab.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < vocab.cols(); ++c) dot += vocab(i, c) * vocab(j, c);
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

void TaskSpec::validate() const {
  if (enforce_alpha_domain) {
    if (!(alpha > 0.0 && alpha < 0.25)) {
      throw ParameterError("alpha = " + std::to_string(alpha) + " is outside the domain (0, 1/4)");
    }
  } else if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ParameterError("alpha must be in (0, 1)");
  }
  if (n == 0) throw ParameterError("sequence length must be positive");
  if (o1 == o2 || o1 >= vocab_size() || o2 >= vocab_size()) throw ParameterError("invalid relevant token ids");
  if (vocab_size() < 3) throw ParameterError("vocabulary has no task-irrelevant tokens");
}

std::vector<SignedToken> TaskSpec::relevant_tokens() const { return {{o1, 1}, {o1, -1}, {o2, 1}, {o2, -1}}; }

std::vector<double> TaskSpec::vector_of(SignedToken t) const {
  std::vector<double> v(vocab.row(t.id).begin(), vocab.row(t.id).end());
  if (t.sign < 0)
    for (double& x : v) x = -x;
  return v;
}

TaskSpec make_task(std::size_t d, std::size_t vocab_size, std::size_t n, double alpha, RngStream& rng, bool rotated) {
  TaskSpec spec;
  spec.vocab = build_vocab(d, vocab_size, rng, rotated);
  spec.n = n;
  spec.alpha = alpha;
  spec.validate();
  return spec;
}

namespace {

// Irrelevant id: uniform over the vocabulary minus {o1, o2}.
std::size_t draw_irrelevant(const TaskSpec& spec, RngStream& rng) {
  const std::size_t lo = std::min(spec.o1, spec.o2), hi = std::max(spec.o1, spec.o2);
  std::size_t id = rng.uniform_index(spec.vocab_size() - 2);
  if (id >= lo) ++id;
  if (id >= hi) ++id;
  return id;
}

SequenceSample fill(const TaskSpec& spec, SignedToken v, RngStream& rng) {
  SequenceSample s;
  s.relevant = v;
  s.label = v.id == spec.o1 ? 1 : -1;
  s.relevant_position = rng.uniform_index(spec.n);
  s.ids.resize(spec.n);
  s.tokens = Matrix(spec.n, spec.d());
  for (std::size_t j = 0; j < spec.n; ++j) {
    const bool rel = j == s.relevant_position;
    const std::size_t id = rel ? v.id : draw_irrelevant(spec, rng);
    const double sign = rel ? static_cast<double>(v.sign) : 1.0;
    s.ids[j] = id;
    const auto src = spec.vocab.row(id);
    auto dst = s.tokens.row(j);
    for (std::size_t c = 0; c < spec.d(); ++c) dst[c] = sign * src[c];
  }
  return s;
}

}  // namespace

SequenceSample sample_sequence(const TaskSpec& spec, RngStream& rng) {
  spec.validate();
  const int label = rng.uniform() < 0.5 ? 1 : -1;
  const int sign = rng.uniform() < spec.alpha ? 1 : -1;
  return fill(spec, {label == 1 ? spec.o1 : spec.o2, sign}, rng);
}

SequenceSample sample_sequence_with(const TaskSpec& spec, SignedToken v, RngStream& rng) {
  spec.validate();
  if (v.id != spec.o1 && v.id != spec.o2) throw ParameterError("sample_sequence_with: not a task-relevant token");
  if (v.sign != 1 && v.sign != -1) throw ParameterError("sample_sequence_with: sign must be +1 or -1");
  return fill(spec, v, rng);
}

std::vector<SequenceSample> sample_dataset(const TaskSpec& spec, std::size_t count, RngStream& rng) {
  std::vector<SequenceSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_sequence(spec, rng));
  return out;
}

}  // namespace hetmoe
