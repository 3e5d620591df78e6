// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "hetmoe/matrix.hpp"
#include "hetmoe/rng.hpp"

namespace hetmoe {

/// Cubic coefficients of one branch of the fitted PCM programming-noise std.
struct NoiseBranch {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
};

/// Weight-programming noise model.
///
/// Full mode: σ = c0·W_max + Σ_{u=1..3} c_u |W|^u / W_max^(u−1), with the
/// `high` branch used when |W| > threshold·W_max and `low` otherwise.
/// Simplified mode: σ = c·W_max for every weight.
/// Both are multiplied by `scale` when weights are programmed.
struct NoiseSpec {
  enum class Mode { kFull, kSimplified };

  Mode mode = Mode::kFull;
  NoiseBranch high{0.012, 0.245, -0.54, 0.40};
  NoiseBranch low{0.014, 0.224, -0.72, 0.952};
  double threshold = 0.292;
  double c = 0.0;
  double scale = 1.0;

  static NoiseSpec full(double scale = 1.0);
  static NoiseSpec simplified(double c);

  void validate() const;
};

/// Full-model std for one weight, including spec.scale. A negative
/// polynomial value is clamped to 0 and reported through `clamped`.
double sigma_full(double w, double w_max, const NoiseSpec& spec, bool* clamped = nullptr);

/// c · W_max.
double sigma_simplified(double w_max, double c);

/// std used by program_weights for one weight under either mode.
double programming_sigma(double w, double w_max, const NoiseSpec& spec, bool* clamped = nullptr);

/// Per-column max|w|.
std::vector<double> column_abs_max(const Matrix& w);

struct ProgramStats {
  std::size_t clamped_sigmas = 0;
};

/// w + N(0, σ²) elementwise, σ from the column's entry in column_max.
/// Column j draws from rng.split(j), so the result does not depend on the
/// thread count. Columns are processed in parallel.
Matrix program_weights(const Matrix& w, std::span<const double> column_max, const NoiseSpec& spec,
                       const RngStream& rng, ProgramStats* stats = nullptr);

namespace serial {
Matrix program_weights(const Matrix& w, std::span<const double> column_max, const NoiseSpec& spec,
                       const RngStream& rng, ProgramStats* stats = nullptr);
}  // namespace serial

}  // namespace hetmoe
