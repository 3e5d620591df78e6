// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "hetmoe/config.hpp"

namespace hetmoe {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 64,       // bad command line
  kExitConfig = 65,      // config parse or validation error
  kExitExperiment = 70,  // experiment failed while running (divergence, numeric error)
  kExitIo = 74,          // output directory or file could not be written
};

/// Environment variable that overrides the config's output_dir.
inline constexpr const char* kOutputDirEnv = "HETMOE_OUTPUT_DIR";

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunSummary {
  std::string experiment;
  std::string output_dir;
  std::vector<std::string> files;  // relative to output_dir, in write order
  double wall_time_s = 0.0;
};

/// Output directory after applying the environment override.
std::string resolve_output_dir(const ExperimentConfig& cfg);

/// Runs the recipe and writes its CSV/JSON results, the effective config and
/// manifest.json into `output_dir` (created if needed). Result files depend
/// only on the config; the manifest also carries wall time and a timestamp.
RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& output_dir);

/// Single-line JSON error report for stderr.
std::string error_report(int code, const std::string& kind, const std::string& message);

}  // namespace hetmoe
