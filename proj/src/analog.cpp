// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/analog.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hetmoe {

TilePlan build_tile_plan(const Matrix& w, std::size_t tile_size) {
  if (tile_size == 0) throw ParameterError("build_tile_plan: tile_size must be >= 1");
  if (w.empty()) throw ShapeError("build_tile_plan: empty matrix");
  TilePlan plan;
  plan.tile_size = tile_size;
  plan.row_tiles = (w.rows() + tile_size - 1) / tile_size;
  plan.col_tiles = (w.cols() + tile_size - 1) / tile_size;
  plan.tiles.reserve(plan.row_tiles * plan.col_tiles);
  for (std::size_t ri = 0; ri < plan.row_tiles; ++ri) {
    for (std::size_t ci = 0; ci < plan.col_tiles; ++ci) {
      Tile t;
      t.row_index = ri;
      t.col_index = ci;
      t.row0 = ri * tile_size;
      t.col0 = ci * tile_size;
      t.rows = std::min(tile_size, w.rows() - t.row0);
      t.cols = std::min(tile_size, w.cols() - t.col0);
      t.column_max.assign(t.cols, 0.0);
      for (std::size_t r = 0; r < t.rows; ++r)
        for (std::size_t c = 0; c < t.cols; ++c)
          t.column_max[c] = std::max(t.column_max[c], std::abs(w(t.row0 + r, t.col0 + c)));
      plan.tiles.push_back(std::move(t));
    }
  }
  return plan;
}

AnalogLayer::AnalogLayer(const Matrix& weights, const AnalogOptions& options, const NoiseSpec& noise,
                         const RngStream& rng)
    : weights_(weights), programmed_(weights), plan_(build_tile_plan(weights, options.tile_size)),
      options_(options), calib_(plan_.tiles.size()) {
  if (options_.quantize) options_.quantizer.validate();
  for (std::size_t i = 0; i < plan_.tiles.size(); ++i) {
    const Tile& t = plan_.tiles[i];
    const Matrix block = weights_.block(t.row0, t.col0, t.rows, t.cols);
    const Matrix noisy = program_weights(block, t.column_max, noise, rng.split(i));
    for (std::size_t r = 0; r < t.rows; ++r)
      for (std::size_t c = 0; c < t.cols; ++c) programmed_(t.row0 + r, t.col0 + c) = noisy(r, c);
  }
}

void AnalogLayer::calibrate(const Matrix& inputs) {
  if (inputs.cols() != weights_.rows()) {
    throw ShapeError("AnalogLayer::calibrate: inputs have " + std::to_string(inputs.cols()) + " features, layer has " +
                     std::to_string(weights_.rows()) + " rows");
  }
  for (std::size_t i = 0; i < plan_.tiles.size(); ++i) {
    const Tile& t = plan_.tiles[i];
    calib_[i] = update_calibration(calib_[i], inputs.block(0, t.row0, inputs.rows(), t.rows),
                                   options_.quantizer.ema_decay);
  }
}

void AnalogLayer::set_input_range(double beta_in) {
  if (!(beta_in > 0.0)) throw ParameterError("set_input_range: beta_in must be positive");
  for (auto& c : calib_) {
    c.ema_std = beta_in / options_.quantizer.kappa;
    c.samples = 1;
  }
}

bool AnalogLayer::calibrated() const {
  return std::all_of(calib_.begin(), calib_.end(), [](const CalibState& c) { return c.initialized(); });
}

double AnalogLayer::beta_in(std::size_t tile_index) const {
  const CalibState& c = calib_.at(tile_index);
  if (!c.initialized()) throw StateError("tile " + std::to_string(tile_index) + " is not calibrated");
  if (c.degenerate()) throw StateError("tile " + std::to_string(tile_index) + " has a zero input range");
  return c.beta_in(options_.quantizer.kappa);
}

std::vector<double> analog_mvm(const AnalogLayer& layer, std::span<const double> x) {
  const Matrix& prog = layer.programmed();
  if (x.size() != prog.rows()) {
    throw ShapeError("analog_mvm: input length " + std::to_string(x.size()) + " vs " + std::to_string(prog.rows()) +
                     " rows");
  }
  const TilePlan& plan = layer.plan();
  const AnalogOptions& opt = layer.options();
  std::vector<double> out(prog.cols(), 0.0);
  std::vector<double> xq;
  std::vector<double> partial;
  for (std::size_t ri = 0; ri < plan.row_tiles; ++ri) {
    for (std::size_t ci = 0; ci < plan.col_tiles; ++ci) {
      const std::size_t index = ri * plan.col_tiles + ci;
      const Tile& t = plan.tiles[index];
      const auto seg = x.subspan(t.row0, t.rows);
      double beta = 0.0;
      if (opt.quantize) {
        beta = layer.beta_in(index);
        xq = dac_quantize(seg, beta, opt.quantizer.dac_bits);
      } else {
        xq.assign(seg.begin(), seg.end());
      }
      partial.assign(t.cols, 0.0);
      for (std::size_t r = 0; r < t.rows; ++r) {
        const double xr = xq[r];
        const auto wr = prog.row(t.row0 + r).subspan(t.col0, t.cols);
        for (std::size_t c = 0; c < t.cols; ++c) partial[c] += xr * wr[c];
      }
      for (std::size_t c = 0; c < t.cols; ++c) {
        double y = partial[c];
        if (opt.quantize) {
          // Same rule as compute_beta_out, from the cached column maximum.
          const double beta_out = t.column_max[c] > 0.0 ? opt.quantizer.lambda * beta * t.column_max[c]
                                                        : kDeadColumnEpsilon * beta;
          y = adc_quantize(y, beta_out, opt.quantizer.adc_bits);
        }
        out[t.col0 + c] += y;
      }
    }
  }
  return out;
}

Matrix analog_mvm_batch(const AnalogLayer& layer, const Matrix& x) {
  if (x.cols() != layer.programmed().rows()) throw ShapeError("analog_mvm_batch: input width != layer rows");
  if (layer.options().quantize)
    for (std::size_t i = 0; i < layer.plan().tiles.size(); ++i) layer.beta_in(i);  // throws when uncalibrated
  Matrix out(x.rows(), layer.programmed().cols());
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
#pragma omp parallel for schedule(static) if (x.rows() > 16)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto y = analog_mvm(layer, x.row(static_cast<std::size_t>(r)));
    std::copy(y.begin(), y.end(), out.row(static_cast<std::size_t>(r)).begin());
  }
  return out;
}

Matrix serial::analog_mvm_batch(const AnalogLayer& layer, const Matrix& x) {
  Matrix out(x.rows(), layer.programmed().cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto y = analog_mvm(layer, x.row(r));
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace hetmoe
