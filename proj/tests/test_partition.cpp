// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "hetmoe/partition.hpp"

using namespace hetmoe;

TEST_CASE("max neuron norm and score") {
  const Matrix w{{3, 0}, {4, 1}};
  CHECK(max_nn_norm(w) == doctest::Approx(5.0));
  ExpertWeights e{w, Matrix{{1, 0}, {0, 2}}, std::nullopt};
  CHECK(max_nn_score(e) == doctest::Approx(10.0));
  e.gate = Matrix{{0, 0}, {0, 0.5}};
  CHECK(max_nn_score(e) == doctest::Approx(5.0));
}

TEST_CASE("digital count rounds up and partitions are disjoint") {
  CHECK(digital_count(0.0, 8) == 0);
  CHECK(digital_count(0.125, 8) == 1);
  CHECK(digital_count(0.2, 8) == 2);
  CHECK(digital_count(1.0, 8) == 8);
  CHECK_THROWS_AS(digital_count(1.5, 8), ParameterError);

  ExpertScoreReport r;
  r.max_nn_score = {0.5, 2.0, 1.0, 2.0};
  const auto plan = make_partition(r, 0.5, "max_nn_score");
  CHECK(plan.digital == std::set<std::size_t>{1, 3});
  CHECK(plan.analog == std::set<std::size_t>{0, 2});
  const auto a = plan.assignment();
  CHECK(a.count(Backend::kDigital) == 2);
  CHECK(a.experts[1] == Backend::kDigital);
  CHECK(a.experts[0] == Backend::kAnalog);
  CHECK(r.ranking(ExpertMetric::kMaxNNScore) == std::vector<std::size_t>{1, 3, 2, 0});
  CHECK_THROWS_AS(make_partition(r, 0.5, ExpertMetric::kRouterNorm), StateError);
  CHECK_THROWS_AS(parse_metric("nope"), ParameterError);
}

TEST_CASE("activation statistics from a calibration stream") {
  // Two experts, token-choice top-1; expert 0 wins on positive first feature.
  MoEBlock b;
  b.router = Matrix{{1, -1}, {0, 0}};
  b.fanout = 1;
  for (int s = 0; s < 2; ++s) b.experts.push_back({Matrix(2, 1, 1.0), Matrix(1, 2, 1.0), std::nullopt});
  const std::vector<Matrix> seqs{Matrix{{1, 0}, {2, 0}, {-1, 0}}, Matrix{{3, 0}}};
  const auto r = score_experts(b, seqs);
  CHECK(r.activation_frequency[0] == doctest::Approx(0.75));
  CHECK(r.activation_frequency[1] == doctest::Approx(0.25));
  CHECK(r.activation_weight[0] == doctest::Approx(1.0));
  CHECK(r.router_norm[0] == doctest::Approx(1.0));
  CHECK_FALSE(r.never_activated[1]);
  const std::vector<Matrix> only_pos{Matrix{{1, 0}}};
  const auto r2 = score_experts(b, only_pos);
  CHECK(r2.never_activated[1]);
  CHECK(r2.activation_weight[1] == 0.0);
  for (auto m : kAllMetrics) CHECK(parse_metric(metric_name(m)) == m);
}
