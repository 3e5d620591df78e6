// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/kernels.hpp"

#include <string>

namespace hetmoe {

namespace {

void check_inner(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

// Row r of a·b into out; ascending k for every output element.
inline void product_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t r) {
  auto o = out.row(r);
  const auto ar = a.row(r);
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double aik = ar[k];
    const auto bk = b.row(k);
    for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * bk[j];
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_inner(a, b);
  Matrix out(a.rows(), b.cols());
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static) if (a.size() * b.cols() > 32768)
  for (std::ptrdiff_t r = 0; r < rows; ++r) product_row(a, b, out, static_cast<std::size_t>(r));
  return out;
}

Matrix serial::matmul(const Matrix& a, const Matrix& b) {
  check_inner(a, b);
  Matrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) product_row(a, b, out, r);
  return out;
}

std::vector<double> vecmat(std::span<const double> x, const Matrix& a) {
  if (x.size() != a.rows()) {
    throw ShapeError("vecmat: vector length " + std::to_string(x.size()) + " vs " + std::to_string(a.rows()) +
                     " rows");
  }
  std::vector<double> out(a.cols(), 0.0);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto ak = a.row(k);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += x[k] * ak[j];
  }
  return out;
}

}  // namespace hetmoe
