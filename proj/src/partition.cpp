// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hetmoe {

std::string_view metric_name(ExpertMetric m) {
  switch (m) {
    case ExpertMetric::kMaxNNScore:
      return "max_nn_score";
    case ExpertMetric::kActivationFrequency:
      return "activation_frequency";
    case ExpertMetric::kActivationWeight:
      return "activation_weight";
    case ExpertMetric::kRouterNorm:
      return "router_norm";
  }
  return "unknown";
}

ExpertMetric parse_metric(std::string_view name) {
  for (auto m : kAllMetrics)
    if (metric_name(m) == name) return m;
  throw ParameterError("unknown expert metric '" + std::string(name) + "'");
}

double max_nn_norm(const Matrix& w) {
  if (w.empty()) throw ShapeError("max_nn_norm: empty matrix");
  std::vector<double> sq(w.cols(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) sq[c] += row[c] * row[c];
  }
  return std::sqrt(*std::max_element(sq.begin(), sq.end()));
}

double max_nn_score(const ExpertWeights& e) {
  double s = max_nn_norm(e.up) * max_nn_norm(e.down);
  if (e.gate) s *= max_nn_norm(*e.gate);
  return s;
}

const std::vector<double>& ExpertScoreReport::scores(ExpertMetric m) const {
  switch (m) {
    case ExpertMetric::kMaxNNScore:
      return max_nn_score;
    case ExpertMetric::kActivationFrequency:
      return activation_frequency;
    case ExpertMetric::kActivationWeight:
      return activation_weight;
    case ExpertMetric::kRouterNorm:
      return router_norm;
  }
  return max_nn_score;
}

std::vector<std::size_t> ExpertScoreReport::ranking(ExpertMetric m) const {
  const auto& s = scores(m);
  if (s.empty()) throw StateError("metric '" + std::string(metric_name(m)) + "' was not computed");
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return idx;
}

ExpertScoreReport weight_scores(const MoEBlock& block) {
  block.validate();
  ExpertScoreReport r;
  for (std::size_t s = 0; s < block.k(); ++s) {
    r.max_nn_score.push_back(max_nn_score(block.experts[s]));
    r.router_norm.push_back(l2_norm(block.router.col(s)));
  }
  return r;
}

ExpertScoreReport score_experts(const MoEBlock& block, std::span<const Matrix> sequences) {
  ExpertScoreReport r = weight_scores(block);
  const std::size_t k = block.k();
  std::vector<double> routed(k, 0.0), weight_sum(k, 0.0);
  double total = 0.0;
  for (const Matrix& seq : sequences) {
    if (block.routing == RoutingMode::kTokenChoice) {
      for (std::size_t j = 0; j < seq.rows(); ++j) {
        const auto route = route_token_choice(block, seq.row(j));
        for (std::size_t i = 0; i < route.experts.size(); ++i) {
          routed[route.experts[i]] += 1.0;
          weight_sum[route.experts[i]] += route.weights[i];
          total += 1.0;
        }
      }
    } else {
      const auto route = route_expert_choice(block, seq);
      for (std::size_t s = 0; s < k; ++s)
        for (double g : route.weights[s]) {
          routed[s] += 1.0;
          weight_sum[s] += g;
          total += 1.0;
        }
    }
  }
  if (total == 0.0) throw ParameterError("score_experts: calibration stream has no tokens");
  r.never_activated.assign(k, false);
  for (std::size_t s = 0; s < k; ++s) {
    r.activation_frequency.push_back(routed[s] / total);
    if (routed[s] > 0.0) {
      r.activation_weight.push_back(weight_sum[s] / routed[s]);
    } else {
      r.activation_weight.push_back(0.0);
      r.never_activated[s] = true;
    }
  }
  return r;
}

BackendAssignment PartitionPlan::assignment() const {
  BackendAssignment a = BackendAssignment::all(digital.size() + analog.size(), Backend::kAnalog);
  for (auto s : digital) a.experts[s] = Backend::kDigital;
  return a;
}

std::size_t digital_count(double gamma, std::size_t k) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParameterError("gamma must be in [0, 1]");
  const double raw = gamma * static_cast<double>(k);
  return std::min(k, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

PartitionPlan make_partition(const ExpertScoreReport& scores, double gamma, ExpertMetric metric) {
  const auto order = scores.ranking(metric);
  const std::size_t nd = digital_count(gamma, order.size());
  PartitionPlan plan;
  plan.gamma = gamma;
  plan.metric = metric;
  for (std::size_t i = 0; i < order.size(); ++i) (i < nd ? plan.digital : plan.analog).insert(order[i]);
  return plan;
}

PartitionPlan make_partition(const ExpertScoreReport& scores, double gamma, std::string_view metric) {
  return make_partition(scores, gamma, parse_metric(metric));
}

}  // namespace hetmoe
