// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetmoe/matrix.hpp"
#include "hetmoe/moe.hpp"

namespace hetmoe {

enum class ExpertMetric { kMaxNNScore, kActivationFrequency, kActivationWeight, kRouterNorm };

std::string_view metric_name(ExpertMetric m);
/// ParameterError for unknown names.
ExpertMetric parse_metric(std::string_view name);
inline constexpr ExpertMetric kAllMetrics[] = {ExpertMetric::kMaxNNScore, ExpertMetric::kActivationFrequency,
                                               ExpertMetric::kActivationWeight, ExpertMetric::kRouterNorm};

/// Largest ℓ2 norm over the columns (neurons) of w.
double max_nn_norm(const Matrix& w);

/// Product of max_nn_norm over up, down and (gated only) gate. The same
/// column convention is applied to the m × d down-projection.
double max_nn_score(const ExpertWeights& e);

struct ExpertScoreReport {
  std::vector<double> max_nn_score;
  std::vector<double> activation_frequency;  // share of all token-routings
  std::vector<double> activation_weight;     // mean routing weight when routed
  std::vector<double> router_norm;           // ‖Σ_{:,s}‖
  std::vector<bool> never_activated;         // activation_weight defaulted to 0

  const std::vector<double>& scores(ExpertMetric m) const;
  /// Descending score, ties to lower index.
  std::vector<std::size_t> ranking(ExpertMetric m) const;
};

/// Router norm and MaxNNScore only; the data-dependent metrics stay empty.
ExpertScoreReport weight_scores(const MoEBlock& block);

/// All four metrics. `sequences` are routed with the block's own routing
/// mode (each matrix is one sequence of tokens). ParameterError when the
/// stream has no tokens.
ExpertScoreReport score_experts(const MoEBlock& block, std::span<const Matrix> sequences);

struct PartitionPlan {
  double gamma = 0.0;
  ExpertMetric metric = ExpertMetric::kMaxNNScore;
  std::set<std::size_t> digital;
  std::set<std::size_t> analog;

  BackendAssignment assignment() const;
};

/// ⌈Γ·k⌉, with a small tolerance so Γ = 0.125, k = 64 gives exactly 8.
std::size_t digital_count(double gamma, std::size_t k);

/// Top ⌈Γ·k⌉ experts by `metric` go digital, the rest analog.
PartitionPlan make_partition(const ExpertScoreReport& scores, double gamma, ExpertMetric metric);
PartitionPlan make_partition(const ExpertScoreReport& scores, double gamma, std::string_view metric);

}  // namespace hetmoe
