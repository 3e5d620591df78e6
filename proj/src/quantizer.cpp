// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hetmoe {

namespace {

void check_bits(int bits, const char* what) {
  if (bits < 2 || bits > 52) throw ParameterError(std::string(what) + ": bit width must be in [2, 52]");
}

}  // namespace

void QuantizerConfig::validate() const {
  check_bits(dac_bits, "dac_bits");
  check_bits(adc_bits, "adc_bits");
  if (!(kappa > 0.0)) throw ParameterError("kappa must be positive");
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ParameterError("ema_decay must be in (0, 1)");
}

double quant_levels(int bits) {
  check_bits(bits, "quant_levels");
  return std::ldexp(1.0, bits - 1) - 1.0;
}

double round_half_away(double v) { return std::round(v); }

double dac_quantize(double x, double beta_in, int bits) {
  if (!(beta_in > 0.0)) throw ParameterError("dac_quantize: beta_in must be positive");
  const double levels = quant_levels(bits);
  const double clamped = std::clamp(x, -beta_in, beta_in);
  return beta_in / levels * round_half_away(clamped * levels / beta_in);
}

std::vector<double> dac_quantize(std::span<const double> x, double beta_in, int bits) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [&](double v) { return dac_quantize(v, beta_in, bits); });
  return out;
}

double adc_quantize(double y, double beta_out, int bits) {
  if (!(beta_out > 0.0)) throw ParameterError("adc_quantize: beta_out must be positive");
  const double levels = quant_levels(bits);
  const double q = beta_out / levels * round_half_away(y * levels / beta_out);
  return std::clamp(q, -beta_out, beta_out);
}

std::vector<double> adc_quantize(std::span<const double> y, double beta_out, int bits) {
  std::vector<double> out(y.size());
  std::transform(y.begin(), y.end(), out.begin(), [&](double v) { return adc_quantize(v, beta_out, bits); });
  return out;
}

BetaOut compute_beta_out(std::span<const double> w_col, double beta_in, double lambda) {
  if (w_col.empty()) throw ShapeError("compute_beta_out: empty column");
  if (!(beta_in > 0.0)) throw ParameterError("compute_beta_out: beta_in must be positive");
  if (!(lambda > 0.0)) throw ParameterError("compute_beta_out: lambda must be positive");
  double wmax = 0.0;
  for (double w : w_col) wmax = std::max(wmax, std::abs(w));
  if (wmax == 0.0) return {kDeadColumnEpsilon * beta_in, true};
  return {lambda * beta_in * wmax, false};
}

double CalibState::beta_in(double kappa) const {
  if (!initialized()) throw StateError("CalibState: no calibration batch seen yet");
  return kappa * ema_std;
}

CalibState update_calibration(const CalibState& state, const Matrix& batch, double decay) {
  if (batch.empty()) throw ParameterError("update_calibration: empty batch");
  if (!(decay > 0.0 && decay < 1.0)) throw ParameterError("update_calibration: decay must be in (0, 1)");
  const auto values = batch.data();
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(values.size()));

  CalibState next = state;
  next.ema_std = state.initialized() ? decay * state.ema_std + (1.0 - decay) * sd : sd;
  next.samples = state.samples + 1;
  return next;
}

namespace {

// Argmin with ties resolved toward the smaller grid value.
double sweep(std::span<const double> grid, const std::function<double(double)>& loss) {
  double best_value = grid.front();
  double best_loss = loss(best_value);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double l = loss(grid[i]);
    if (l < best_loss || (l == best_loss && grid[i] < best_value)) {
      best_loss = l;
      best_value = grid[i];
    }
  }
  return best_value;
}

}  // namespace

std::pair<double, double> grid_calibrate(const CalibrationEvaluator& evaluate, std::span<const double> kappa_grid,
                                         std::span<const double> lambda_grid) {
  if (kappa_grid.empty() || lambda_grid.empty()) throw ParameterError("grid_calibrate: empty grid");
  const double kappa = sweep(kappa_grid, [&](double k) { return evaluate(k, 1.0); });
  const double lambda = sweep(lambda_grid, [&](double l) { return evaluate(kappa, l); });
  return {kappa, lambda};
}

}  // namespace hetmoe
