// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hetmoe/experiments.hpp"
#include "hetmoe/perfmodel.hpp"
#include "hetmoe/prognoise.hpp"
#include "hetmoe/quantizer.hpp"

namespace hetmoe {

struct ExperimentInfo {
  std::string_view name;
  std::string_view summary;
};

/// Recipes known to `run`, in listing order.
const std::vector<ExperimentInfo>& experiment_catalog();

struct NoiseValidateConfig {
  NoiseSpec noise = NoiseSpec::full();
  /// (w, w_max) pairs; both branches of the full model by default.
  std::vector<std::pair<double, double>> points{{0.0, 1.0},  {0.05, 1.0}, {0.1, 1.0},  {0.2, 1.0},  {0.29, 1.0},
                                                {0.3, 1.0},  {0.5, 1.0},  {0.75, 1.0}, {1.0, 1.0},  {-0.6, 2.0}};
  std::size_t draws = 1000000;
};

struct QuantizerValidateConfig {
  std::vector<int> bits{4, 8, 12};
  std::size_t samples = 10000;
  double beta = 1.0;
  double input_spread = 1.5;  // inputs uniform in ±spread·β, so saturation is exercised
};

struct CalibrateConfig {
  std::vector<double> kappa_grid{15, 20, 25, 30, 35, 40, 45};
  std::vector<double> lambda_grid{0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
  std::size_t d = 64;
  std::size_t m = 32;
  std::size_t experts = 4;
  std::size_t fanout = 2;
  std::size_t calibration_tokens = 256;
  std::size_t eval_tokens = 256;
  double token_std = 1.0;
  double outlier_scale = 8.0;  // heavy-tailed inputs: 1 in 64 entries scaled by this
  QuantizerConfig quantizer;
  NoiseSpec noise = NoiseSpec::simplified(0.0);
  std::size_t tile_size = 32;
};

struct PerfConfig {
  MoEModelSpec model;
  DeviceProfile device = DeviceProfile::defaults();
  std::size_t batch = 32;
  std::vector<double> gammas{0.125, 0.25};
  TransferAccounting transfer = TransferAccounting::kAllPlaced;
};

struct ExperimentConfig {
  std::string experiment;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "results";
  ToyInstance task;
  TrainConfig train;
  ProbeConfig probe;
  Theorem1Config theorem1;
  CompareConfig compare;
  NoiseValidateConfig noise_validate;
  QuantizerValidateConfig quantizer_validate;
  CalibrateConfig calibrate;
  PerfConfig perf;

  /// ConfigError with the offending field when something is out of range.
  void validate() const;
};

/// Default training hyperparameters of the toy instance (frozen).
TrainConfig default_train_config();

/// Parses the JSON config text; unknown keys are rejected. Throws ConfigError.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::string& path);

/// Canonical JSON of the effective config (defaults filled in).
std::string config_to_json(const ExperimentConfig& cfg);

/// FNV-1a 64 of the canonical JSON, hex encoded.
std::string config_hash(const ExperimentConfig& cfg);

TransferAccounting parse_transfer(std::string_view name);
std::string_view transfer_name(TransferAccounting t);

}  // namespace hetmoe
