// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "hetmoe/kernels.hpp"
#include "hetmoe/moe.hpp"

using namespace hetmoe;

namespace {

MoEBlock random_block(RngStream& rng, std::size_t d, std::size_t m, std::size_t k, bool gated, RoutingMode mode,
                      std::size_t fanout) {
  MoEBlock b;
  b.router = gaussian(rng, 0, 1, d, k);
  b.routing = mode;
  b.fanout = fanout;
  for (std::size_t s = 0; s < k; ++s) {
    ExpertWeights e{gaussian(rng, 0, 0.5, d, m), gaussian(rng, 0, 0.5, m, d), std::nullopt};
    if (gated) e.gate = gaussian(rng, 0, 0.5, d, m);
    b.experts.push_back(std::move(e));
  }
  return b;
}

// Direct evaluation of the block, independent of the library's routing code.
Matrix oracle_forward(const MoEBlock& b, const Matrix& x) {
  const std::size_t n = x.rows(), d = b.d(), k = b.k();
  Matrix g(n, k);  // dense routing weights
  const Matrix scores = matmul(x, b.router);
  if (b.routing == RoutingMode::kTokenChoice) {
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<std::size_t> chosen;
      for (std::size_t pick = 0; pick < b.fanout; ++pick) {
        std::size_t best = k;
        for (std::size_t s = 0; s < k; ++s) {
          if (std::find(chosen.begin(), chosen.end(), s) != chosen.end()) continue;
          if (best == k || scores(j, s) > scores(j, best)) best = s;
        }
        chosen.push_back(best);
      }
      double z = 0;
      for (auto s : chosen) z += std::exp(scores(j, s));
      for (auto s : chosen) g(j, s) = std::exp(scores(j, s)) / z;
    }
  } else {
    for (std::size_t s = 0; s < k; ++s) {
      std::vector<std::size_t> chosen;
      for (std::size_t pick = 0; pick < b.fanout; ++pick) {
        std::size_t best = n;
        for (std::size_t j = 0; j < n; ++j) {
          if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
          if (best == n || scores(j, s) > scores(best, s)) best = j;
        }
        chosen.push_back(best);
      }
      double z = 0;
      for (auto j : chosen) z += std::exp(scores(j, s));
      for (auto j : chosen) g(j, s) = std::exp(scores(j, s)) / z;
    }
  }
  Matrix out(n, d);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t s = 0; s < k; ++s) {
      if (g(j, s) == 0.0) continue;
      const auto& e = b.experts[s];
      for (std::size_t r = 0; r < e.m(); ++r) {
        double u = 0, v = 0;
        for (std::size_t q = 0; q < d; ++q) {
          u += x(j, q) * e.up(q, r);
          if (e.gate) v += x(j, q) * (*e.gate)(q, r);
        }
        double h = activate(b.activation, u);
        if (e.gate) h *= v;
        for (std::size_t q = 0; q < d; ++q) out(j, q) += g(j, s) * h * e.down(r, q);
      }
    }
  return out;
}

}  // namespace

TEST_CASE("softmax and top indices") {
  const std::vector<double> v{1, 3, 3, 2};
  CHECK(top_indices(v, 2) == std::vector<std::size_t>{1, 2});
  CHECK(top_indices(v, 10).size() == 4);
  const auto p = softmax(std::vector<double>{0, std::log(3.0)});
  CHECK(p[0] == doctest::Approx(0.25));
  CHECK(p[1] == doctest::Approx(0.75));
  const auto big = softmax(std::vector<double>{1000, 1000});
  CHECK(big[0] == doctest::Approx(0.5));
}

TEST_CASE("block forward matches a direct oracle for both routing modes") {
  RngStream rng(5, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const bool gated = trial % 2 == 1;
    const auto mode = trial % 4 < 2 ? RoutingMode::kTokenChoice : RoutingMode::kExpertChoice;
    const std::size_t k = 4, n = 6;
    auto b = random_block(rng, 5, 3, k, gated, mode, 2);
    b.activation = trial % 3 == 0 ? Activation::kRelu : Activation::kSilu;
    const Matrix x = gaussian(rng, 0, 1, n, 5);
    const auto y = block_forward(b, x, BackendAssignment::all(k, Backend::kDigital));
    CHECK(max_abs_diff(y, oracle_forward(b, x)) < 1e-12);
  }
}

TEST_CASE("expert-choice route structure") {
  const Matrix scores{{0.1, 5}, {0.3, 4}, {0.2, 4}};
  const auto r = route_expert_choice(scores, 2);
  CHECK(r.tokens[0] == std::vector<std::size_t>{1, 2});
  CHECK(r.tokens[1] == std::vector<std::size_t>{0, 1});
  CHECK(r.weights[1][0] + r.weights[1][1] == doctest::Approx(1.0));
  const auto g = r.dense_weights();
  CHECK(g(0, 0) == 0.0);
  CHECK(g(2, 0) > 0.0);
  CHECK_THROWS_AS(route_expert_choice(scores, 4), ParameterError);
}

TEST_CASE("noiseless analog experts reproduce the digital block") {
  RngStream rng(8, 0);
  auto b = random_block(rng, 6, 4, 3, true, RoutingMode::kTokenChoice, 2);
  const Matrix x = gaussian(rng, 0, 1, 5, 6);
  auto assign = BackendAssignment::all(3, Backend::kDigital);
  assign.experts[1] = Backend::kAnalog;
  AnalogOptions o;
  o.quantize = false;
  AnalogContext ctx(b, assign, o, NoiseSpec::simplified(0.0), RngStream(1, 0));
  CHECK(ctx.expert(0) == nullptr);
  CHECK(ctx.expert(1) != nullptr);
  const auto y = block_forward(b, x, assign, &ctx);
  CHECK(max_abs_diff(y, block_forward(b, x, BackendAssignment::all(3, Backend::kDigital))) < 1e-12);
  CHECK_THROWS_AS(block_forward(b, x, assign), StateError);
}

TEST_CASE("shape and parameter validation") {
  RngStream rng(1, 0);
  auto b = random_block(rng, 4, 2, 2, false, RoutingMode::kTokenChoice, 3);
  CHECK_THROWS_AS(b.validate(), ParameterError);
  b.fanout = 1;
  b.experts[0].down = Matrix(3, 4);
  CHECK_THROWS_AS(b.validate(), ShapeError);
  const std::vector<int> bad_signs{1, 0};
  std::vector<Matrix> up(2, Matrix(4, 2));
  CHECK_THROWS_AS(make_theory_block(up, Matrix(4, 2), bad_signs, 1), ParameterError);
}

TEST_CASE("sequence head averages over width and sums over tokens") {
  CHECK(sequence_head(Matrix{{1, 3}, {2, 2}}) == doctest::Approx(4.0));
}
