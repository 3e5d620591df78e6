// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hetmoe/matrix.hpp"
#include "hetmoe/prognoise.hpp"
#include "hetmoe/quantizer.hpp"
#include "hetmoe/rng.hpp"

namespace hetmoe {

inline constexpr std::size_t kDefaultTileSize = 512;

/// One crossbar block of a weight matrix.
struct Tile {
  std::size_t row0 = 0;
  std::size_t rows = 0;
  std::size_t col0 = 0;
  std::size_t cols = 0;
  std::size_t row_index = 0;  // position in the tile grid
  std::size_t col_index = 0;
  std::vector<double> column_max;  // max|w| of each column segment
};

/// Row-major blocking of a matrix into tiles of at most tile_size × tile_size.
struct TilePlan {
  std::size_t tile_size = kDefaultTileSize;
  std::size_t row_tiles = 0;
  std::size_t col_tiles = 0;
  std::vector<Tile> tiles;  // index = row_index * col_tiles + col_index

  const Tile& at(std::size_t row_index, std::size_t col_index) const {
    return tiles[row_index * col_tiles + col_index];
  }
};

TilePlan build_tile_plan(const Matrix& w, std::size_t tile_size);

struct AnalogOptions {
  std::size_t tile_size = kDefaultTileSize;
  QuantizerConfig quantizer;
  /// false skips DAC/ADC and leaves only programming noise.
  bool quantize = true;
};

/// A weight matrix deployed on simulated crossbars.
///
/// Programming noise is drawn once at construction (one chip programming);
/// every later MVM reuses the same programmed conductances. Each tile keeps
/// its own input-range calibration, κ and λ are shared.
class AnalogLayer {
 public:
  AnalogLayer(const Matrix& weights, const AnalogOptions& options, const NoiseSpec& noise, const RngStream& rng);

  const Matrix& weights() const { return weights_; }
  const Matrix& programmed() const { return programmed_; }
  const TilePlan& plan() const { return plan_; }
  const AnalogOptions& options() const { return options_; }
  const std::vector<CalibState>& calibration() const { return calib_; }

  /// Folds a batch of inputs (tokens × weight rows) into every tile's EMA.
  void calibrate(const Matrix& inputs);
  /// Pins β_in for every tile, bypassing the EMA.
  void set_input_range(double beta_in);
  bool calibrated() const;

  /// Input range of one tile; StateError when uncalibrated or degenerate.
  double beta_in(std::size_t tile_index) const;

 private:
  Matrix weights_;
  Matrix programmed_;
  TilePlan plan_;
  AnalogOptions options_;
  std::vector<CalibState> calib_;
};

/// Per tile: DAC the input segment, multiply by the programmed block, ADC each
/// column, then sum row-tiles digitally in ascending row-tile order.
std::vector<double> analog_mvm(const AnalogLayer& layer, std::span<const double> x);

/// Row-by-row analog_mvm of a token batch; tokens run in parallel.
Matrix analog_mvm_batch(const AnalogLayer& layer, const Matrix& x);

namespace serial {
Matrix analog_mvm_batch(const AnalogLayer& layer, const Matrix& x);
}  // namespace serial

}  // namespace hetmoe
