// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/prognoise.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hetmoe {

NoiseSpec NoiseSpec::full(double scale) {
  NoiseSpec s;
  s.scale = scale;
  return s;
}

NoiseSpec NoiseSpec::simplified(double c) {
  NoiseSpec s;
  s.mode = Mode::kSimplified;
  s.c = c;
  return s;
}

void NoiseSpec::validate() const {
  if (!(scale >= 0.0)) throw ParameterError("noise scale must be >= 0");
  if (!(c >= 0.0)) throw ParameterError("simplified noise coefficient c must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("noise branch threshold must be in (0, 1)");
}

double sigma_full(double w, double w_max, const NoiseSpec& spec, bool* clamped) {
  if (!(w_max > 0.0)) throw ParameterError("sigma_full: w_max must be positive");
  const double a = std::abs(w);
  if (a > w_max) {
    throw ParameterError("sigma_full: |w| = " + std::to_string(a) + " exceeds w_max = " + std::to_string(w_max));
  }
  // Magnitude comparison: W_max is a magnitude, so the branch test is too.
  const NoiseBranch& b = a > spec.threshold * w_max ? spec.high : spec.low;
  const double sigma = b.c0 * w_max + b.c1 * a + b.c2 * a * a / w_max + b.c3 * a * a * a / (w_max * w_max);
  if (clamped) *clamped = sigma < 0.0;
  return spec.scale * std::max(sigma, 0.0);
}

double sigma_simplified(double w_max, double c) {
  if (!(w_max > 0.0)) throw ParameterError("sigma_simplified: w_max must be positive");
  if (!(c >= 0.0)) throw ParameterError("sigma_simplified: c must be >= 0");
  return c * w_max;
}

double programming_sigma(double w, double w_max, const NoiseSpec& spec, bool* clamped) {
  if (spec.mode == NoiseSpec::Mode::kFull) return sigma_full(w, w_max, spec, clamped);
  if (clamped) *clamped = false;
  return spec.scale * sigma_simplified(w_max, spec.c);
}

std::vector<double> column_abs_max(const Matrix& w) {
  std::vector<double> m(w.cols(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) m[c] = std::max(m[c], std::abs(row[c]));
  }
  return m;
}

namespace {

void check_columns(const Matrix& w, std::span<const double> column_max, const NoiseSpec& spec) {
  spec.validate();
  if (column_max.size() != w.cols()) {
    throw ParameterError("program_weights: " + std::to_string(column_max.size()) + " column maxima for " +
                         std::to_string(w.cols()) + " columns");
  }
  const auto actual = column_abs_max(w);
  for (std::size_t c = 0; c < w.cols(); ++c) {
    if (!(column_max[c] >= actual[c])) {
      throw ParameterError("program_weights: column " + std::to_string(c) + " max " +
                           std::to_string(column_max[c]) + " below max|w| " + std::to_string(actual[c]));
    }
  }
}

// Programs one column. A zero column maximum means an all-zero column with no
// conductance range; it stays exactly zero.
std::size_t program_column(const Matrix& w, Matrix& out, std::size_t c, double wmax, const NoiseSpec& spec,
                           const RngStream& rng) {
  if (wmax == 0.0) return 0;
  RngStream col_rng = rng.split(c);
  std::size_t clamped_count = 0;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    bool clamped = false;
    const double sigma = programming_sigma(w(r, c), wmax, spec, &clamped);
    clamped_count += clamped;
    out(r, c) = w(r, c) + sigma * col_rng.normal();
  }
  return clamped_count;
}

bool noiseless(const NoiseSpec& spec) {
  return spec.scale == 0.0 || (spec.mode == NoiseSpec::Mode::kSimplified && spec.c == 0.0);
}

}  // namespace

Matrix program_weights(const Matrix& w, std::span<const double> column_max, const NoiseSpec& spec,
                       const RngStream& rng, ProgramStats* stats) {
  check_columns(w, column_max, spec);
  Matrix out = w;
  if (noiseless(spec)) return out;
  const auto cols = static_cast<std::ptrdiff_t>(w.cols());
  std::size_t clamped = 0;
#pragma omp parallel for schedule(static) reduction(+ : clamped) if (w.size() > 16384)
  for (std::ptrdiff_t c = 0; c < cols; ++c) {
    const auto col = static_cast<std::size_t>(c);
    clamped += program_column(w, out, col, column_max[col], spec, rng);
  }
  if (stats) stats->clamped_sigmas += clamped;
  return out;
}

Matrix serial::program_weights(const Matrix& w, std::span<const double> column_max, const NoiseSpec& spec,
                               const RngStream& rng, ProgramStats* stats) {
  check_columns(w, column_max, spec);
  Matrix out = w;
  if (noiseless(spec)) return out;
  std::size_t clamped = 0;
  for (std::size_t c = 0; c < w.cols(); ++c) clamped += program_column(w, out, c, column_max[c], spec, rng);
  if (stats) stats->clamped_sigmas += clamped;
  return out;
}

}  // namespace hetmoe
