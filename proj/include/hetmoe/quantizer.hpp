// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "hetmoe/matrix.hpp"

namespace hetmoe {

/// DAC/ADC bit widths and range multipliers shared by all tiles.
struct QuantizerConfig {
  int dac_bits = 8;
  int adc_bits = 8;
  double kappa = 35.0;   // β_in = κ · EMA(std(x))
  double lambda = 1.0;   // β_out = λ · β_in · max|column|
  double ema_decay = 0.9;

  /// Throws ParameterError on bit widths < 2 or non-positive multipliers.
  void validate() const;
};

/// Number of positive quantization levels, 2^(bits−1) − 1.
double quant_levels(int bits);

/// Round half away from zero. The quantizers use this tie rule.
double round_half_away(double v);

/// Input (DAC) quantization: clamp to [−β_in, β_in], then round onto the
/// grid {n·β_in / (2^(b−1)−1)}.
double dac_quantize(double x, double beta_in, int bits);
std::vector<double> dac_quantize(std::span<const double> x, double beta_in, int bits);

/// Output (ADC) quantization: round onto the grid first, clamp to
/// [−β_out, β_out] afterwards.
double adc_quantize(double y, double beta_out, int bits);
std::vector<double> adc_quantize(std::span<const double> y, double beta_out, int bits);

struct BetaOut {
  double value = 0.0;
  bool dead_column = false;  // all-zero column, value is a tiny positive floor
};

/// Relative floor for β_out of an all-zero column.
inline constexpr double kDeadColumnEpsilon = 1e-12;

/// β_out = λ · β_in · max|w_col|, or kDeadColumnEpsilon·β_in for a zero column.
BetaOut compute_beta_out(std::span<const double> w_col, double beta_in, double lambda);

/// Running input-range statistic for one tile.
struct CalibState {
  double ema_std = 0.0;
  std::size_t samples = 0;  // number of batches folded in

  bool initialized() const { return samples > 0; }
  /// EMA collapsed to zero (e.g. only all-zero batches seen).
  bool degenerate() const { return initialized() && ema_std == 0.0; }
  /// κ · EMA. Throws StateError before the first update.
  double beta_in(double kappa) const;
};

/// Fold one batch in: the first batch sets the EMA to its standard deviation,
/// later ones blend as decay·old + (1−decay)·std. std is the population
/// standard deviation over all batch elements.
CalibState update_calibration(const CalibState& state, const Matrix& batch, double decay);

/// Loss for a (κ, λ) pair; exceptions propagate out of grid_calibrate.
using CalibrationEvaluator = std::function<double(double kappa, double lambda)>;

/// Two-phase sweep: κ over kappa_grid with λ = 1, then λ over lambda_grid
/// at the chosen κ. Ties go to the smaller value.
std::pair<double, double> grid_calibrate(const CalibrationEvaluator& evaluate, std::span<const double> kappa_grid,
                                         std::span<const double> lambda_grid);

}  // namespace hetmoe
