// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace hetmoe {

/// Operand shapes do not agree.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A scalar argument is outside its domain.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An object is used before it is ready (e.g. an uncalibrated tile).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Experiment configuration could not be parsed or validated.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training left the admissible weight range.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hetmoe
