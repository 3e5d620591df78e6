// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "hetmoe/matrix.hpp"

namespace hetmoe {

/// Dense product a·b. Every output element is accumulated in ascending
/// inner index from 0.0, so the result is bit-identical to the naive triple
/// loop and independent of thread count. Parallel over output rows.
Matrix matmul(const Matrix& a, const Matrix& b);

namespace serial {
/// Single-threaded reference for matmul(); kept for tests and benchmarks.
Matrix matmul(const Matrix& a, const Matrix& b);
}  // namespace serial

/// x (length a.rows()) times a: the row-vector convention used for
/// every projection in this library.
std::vector<double> vecmat(std::span<const double> x, const Matrix& a);

}  // namespace hetmoe
