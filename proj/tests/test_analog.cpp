// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "hetmoe/analog.hpp"
#include "hetmoe/kernels.hpp"

using namespace hetmoe;

namespace {

AnalogOptions wide_options(std::size_t tile, std::size_t rows) {
  AnalogOptions o;
  o.tile_size = tile;
  o.quantizer.dac_bits = 24;
  o.quantizer.adc_bits = 24;
  o.quantizer.lambda = static_cast<double>(std::min(tile, rows));  // β_out covers Σ|x||w| per tile
  return o;
}

}  // namespace

TEST_CASE("tile plan covers the matrix with ragged edges") {
  const Matrix w(5, 7, 1.0);
  const auto plan = build_tile_plan(w, 3);
  CHECK(plan.row_tiles == 2);
  CHECK(plan.col_tiles == 3);
  CHECK(plan.at(1, 2).rows == 2);
  CHECK(plan.at(1, 2).cols == 1);
  CHECK(plan.at(0, 1).col0 == 3);
  CHECK_THROWS_AS(build_tile_plan(w, 0), ParameterError);
}

TEST_CASE("tile column maxima are per tile") {
  Matrix w{{1, 0}, {0, 0}, {0, 5}, {-3, 0}};
  const auto plan = build_tile_plan(w, 2);
  CHECK(plan.at(0, 0).column_max == std::vector<double>{1, 0});
  CHECK(plan.at(1, 0).column_max == std::vector<double>{3, 5});
}

TEST_CASE("noiseless high-resolution analog MVM equals the exact product") {
  RngStream rng(21, 0);
  for (int layer = 0; layer < 20; ++layer) {
    const std::size_t rows = 1 + rng.uniform_index(40), cols = 1 + rng.uniform_index(40);
    const Matrix w = gaussian(rng, 0, 1, rows, cols);
    const Matrix x = gaussian(rng, 0, 1, 3, rows);
    double xmax = 0;
    for (double v : x.data()) xmax = std::max(xmax, std::abs(v));
    const Matrix exact = matmul(x, w);
    for (std::size_t tile : {2, 8, 512}) {
      AnalogLayer a(w, wide_options(tile, rows), NoiseSpec::simplified(0.0), RngStream(1, 0));
      a.set_input_range(xmax);
      const Matrix y = analog_mvm_batch(a, x);
      CHECK(relative_error(y, exact) < 1e-4);
      CHECK(y == serial::analog_mvm_batch(a, x));
    }
  }
}

TEST_CASE("quantize off leaves only programming noise") {
  RngStream rng(2, 0);
  const Matrix w = gaussian(rng, 0, 1, 6, 4);
  AnalogOptions o;
  o.quantize = false;
  AnalogLayer a(w, o, NoiseSpec::simplified(0.0), RngStream(1, 0));
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const auto y = analog_mvm(a, x);
  const auto ref = vecmat(x, w);
  for (std::size_t c = 0; c < 4; ++c) CHECK(y[c] == doctest::Approx(ref[c]).epsilon(1e-12));
  AnalogLayer noisy(w, o, NoiseSpec::simplified(0.1), RngStream(1, 0));
  CHECK_FALSE(noisy.programmed() == w);
}

TEST_CASE("uncalibrated layer refuses to run") {
  const Matrix w(4, 4, 1.0);
  AnalogLayer a(w, AnalogOptions{}, NoiseSpec::simplified(0.0), RngStream(1, 0));
  CHECK_FALSE(a.calibrated());
  CHECK_THROWS_AS(analog_mvm(a, std::vector<double>(4, 1.0)), StateError);
  a.calibrate(Matrix(2, 4, 0.0));
  CHECK_THROWS_AS(analog_mvm(a, std::vector<double>(4, 1.0)), StateError);
  a.calibrate(Matrix{{1, -1, 1, -1}});
  CHECK(a.calibrated());
  CHECK_NOTHROW(analog_mvm(a, std::vector<double>(4, 1.0)));
  CHECK_THROWS_AS(analog_mvm(a, std::vector<double>(3, 1.0)), ShapeError);
}

TEST_CASE("programming noise scales with the tile column max") {
  Matrix w(512, 2, 0.0);
  for (std::size_t r = 0; r < 512; ++r) w(r, 1) = 0.01;
  w(0, 0) = 10.0;
  AnalogOptions o;
  o.quantize = false;
  o.tile_size = 256;
  AnalogLayer a(w, o, NoiseSpec::simplified(0.1), RngStream(4, 0));
  // Column 0, second tile: all-zero segment stays exact.
  for (std::size_t r = 256; r < 512; ++r) CHECK(a.programmed()(r, 0) == 0.0);
  double ss = 0;
  for (std::size_t r = 1; r < 256; ++r) ss += a.programmed()(r, 0) * a.programmed()(r, 0);
  CHECK(std::sqrt(ss / 255) == doctest::Approx(1.0).epsilon(0.15));
}
