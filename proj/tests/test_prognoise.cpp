// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "hetmoe/prognoise.hpp"

using namespace hetmoe;

TEST_CASE("full noise model hand values") {
  const auto spec = NoiseSpec::full();
  // Low branch at w = 0: c0 · w_max.
  CHECK(sigma_full(0.0, 2.0, spec) == doctest::Approx(0.028));
  // High branch at |w| = w_max = 1: 0.012 + 0.245 − 0.54 + 0.40.
  CHECK(sigma_full(1.0, 1.0, spec) == doctest::Approx(0.117));
  CHECK(sigma_full(-1.0, 1.0, spec) == doctest::Approx(0.117));
  // Low branch at w = 0.2: 0.014 + 0.224·0.2 − 0.72·0.04 + 0.952·0.008.
  CHECK(sigma_full(0.2, 1.0, spec) == doctest::Approx(0.014 + 0.0448 - 0.0288 + 0.007616));
  // Scale invariance: σ(tw, tW) = t σ(w, W).
  CHECK(sigma_full(0.6, 2.0, spec) == doctest::Approx(2.0 * sigma_full(0.3, 1.0, spec)));
  CHECK_THROWS_AS(sigma_full(2.0, 1.0, spec), ParameterError);
  CHECK_THROWS_AS(sigma_full(0.0, 0.0, spec), ParameterError);
}

TEST_CASE("simplified noise model") {
  CHECK(sigma_simplified(2.0, 0.05) == doctest::Approx(0.1));
  CHECK(programming_sigma(0.3, 2.0, NoiseSpec::simplified(0.05)) == doctest::Approx(0.1));
  CHECK_THROWS_AS(sigma_simplified(1.0, -0.1), ParameterError);
}

TEST_CASE("program_weights statistics and determinism") {
  const std::size_t n = 200000;
  Matrix w(n, 2);
  for (std::size_t r = 0; r < n; ++r) {
    w(r, 0) = 0.5;
    w(r, 1) = -0.1;
  }
  const std::vector<double> cmax{1.0, 1.0};
  const auto spec = NoiseSpec::full();
  RngStream rng(9, 0);
  const auto p = program_weights(w, cmax, spec, rng);
  CHECK(p == serial::program_weights(w, cmax, spec, rng));
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, ss = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const double e = p(r, c) - w(r, c);
      s += e;
      ss += e * e;
    }
    const double sd = std::sqrt(ss / n - (s / n) * (s / n));
    CHECK(std::abs(s / n) < 5 * sd / std::sqrt(double(n)));
    CHECK(sd == doctest::Approx(sigma_full(w(0, c), 1.0, spec)).epsilon(0.01));
  }
  const auto zero = program_weights(w, cmax, NoiseSpec::simplified(0.0), rng);
  CHECK(zero == w);
  CHECK_THROWS_AS(program_weights(w, std::vector<double>{0.1, 1.0}, spec, rng), ParameterError);
}

TEST_CASE("all-zero column stays zero") {
  Matrix w(4, 1, 0.0);
  const auto p = program_weights(w, column_abs_max(w), NoiseSpec::simplified(0.1), RngStream(1, 0));
  CHECK(p == w);
}
