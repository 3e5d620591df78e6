// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hetmoe/matrix.hpp"
#include "hetmoe/moe.hpp"
#include "hetmoe/prognoise.hpp"
#include "hetmoe/rng.hpp"
#include "hetmoe/synthetic.hpp"

namespace hetmoe {

/// SGD hyperparameters for the analysis model.
struct TrainConfig {
  std::size_t steps = 400;  // T
  std::size_t batch = 256;  // B
  double eta_expert = 0.1;
  double eta_router = 0.1;
  std::size_t capacity = 2;  // l, tokens per expert per sequence
  std::size_t experts = 8;   // k
  std::size_t width = 16;    // m, neurons per expert
  std::vector<int> signs;    // a_s; empty means first ⌈k/2⌉ are +1
  double init_up = 0.05;
  double init_router = 0.05;
  /// Redraw the router until every relevant token has a candidate expert
  /// (see init_router_admissible).
  bool enforce_init_conditions = true;
  std::size_t max_init_attempts = 10000;
  std::size_t history_every = 50;
  std::size_t monitor_size = 512;  // held-out sequences for the loss history
  double divergence_bound = 1e8;

  void validate() const;
  std::vector<int> resolved_signs() const;
};

/// Single MoE block with trainable up-projections and router, fixed
/// down-projections a_s·1 and expert-choice routing.
struct TheoryModel {
  std::vector<Matrix> up;  // per expert, d × m; column r is neuron w_r
  Matrix router;           // Σ, d × k
  std::vector<int> signs;  // a_s ∈ {±1}
  std::size_t capacity = 2;

  std::size_t k() const { return up.size(); }
  std::size_t d() const { return router.rows(); }
  std::size_t m() const { return up.empty() ? 0 : up.front().cols(); }

  /// Same model as a generic MoE block (down = a_s·1^(m×d), ReLU).
  MoEBlock to_block() const;
  double max_abs_weight() const;
};

/// Per-sequence routing: for each expert its token set J_s and weights.
using SequenceRoute = ExpertChoiceRoute;

SequenceRoute route_sequence(const TheoryModel& model, const Matrix& tokens);

/// Σ_s a_s Σ_{j∈J_s} G_j Σ_r relu(⟨w_r, x_j⟩). `route` may be reused across
/// calls that share the router (noise never touches the router).
double forward_theory(const TheoryModel& model, const Matrix& tokens);
double forward_theory(const TheoryModel& model, const Matrix& tokens, const SequenceRoute& route);

/// The same scalar through block_forward and the (1/d)·Σ_j 1ᵀ x_out head.
double forward_theory_head(const TheoryModel& model, const Matrix& tokens);

struct Gradients {
  std::vector<Matrix> up;
  Matrix router;
};

struct LossAndGrads {
  double loss = 0.0;  // mean max(1 − y f, 0)
  Gradients grads;
};

/// Mean hinge loss plus gradients of the surrogate 1 − y f (not zeroed when
/// the hinge is inactive), averaged over the batch. Neuron gradient:
/// −y a_s Σ_{j∈J_s} G_j x_j 1[⟨w_r, x_j⟩ ≥ 0]. Router gradient: the same
/// surrogate differentiated through the softmax weights with J_s held fixed.
/// Per-sample work runs in parallel; the reduction order is fixed.
LossAndGrads hinge_loss_and_grads(const TheoryModel& model, std::span<const SequenceSample> batch);

namespace serial {
LossAndGrads hinge_loss_and_grads(const TheoryModel& model, std::span<const SequenceSample> batch);
}  // namespace serial

/// Probability that a relevant token is routed to s with G ≥ 1/l (p) and
/// that it is routed at all (p̄), per relevant token (rows +o1, −o1, +o2,
/// −o2) and expert (columns).
struct SpecializationProbe {
  std::vector<SignedToken> tokens;
  Matrix p;
  Matrix p_routed;
};

SpecializationProbe probe_specialization(const TheoryModel& model, const TaskSpec& spec, std::size_t probe_size,
                                         RngStream& rng);

/// Experts whose label group matches the token's label (a_s = +1 for ±o1,
/// −1 for ±o2) and whose p is at least `threshold`.
std::vector<std::size_t> specialized_experts(const TheoryModel& model, const SpecializationProbe& probe,
                                             std::size_t token_row, double threshold);

/// Initial-router condition: every relevant token v has an expert in its
/// label group whose chance of routing −v is at most 1/d. The chance is
/// the exact binomial tail over the i.i.d. irrelevant tokens.
bool init_router_admissible(const Matrix& router, std::span<const int> signs, const TaskSpec& spec,
                            std::size_t capacity);

/// Probability that −v lands in expert s's top-l at the given router.
double routed_negation_probability(const Matrix& router, std::size_t s, SignedToken v, const TaskSpec& spec,
                                   std::size_t capacity);

struct InitReport {
  std::size_t router_attempts = 0;
  bool conditions_met = true;
};

TheoryModel init_model(const TaskSpec& spec, const TrainConfig& cfg, RngStream& rng, InitReport* report = nullptr);

struct HistoryPoint {
  std::size_t step = 0;
  double loss = 0.0;                 // mean hinge loss on the monitor set
  std::vector<double> max_nn_score;  // per expert
};

struct TrainResult {
  TheoryModel model;
  std::vector<HistoryPoint> history;
  InitReport init;
};

/// T SGD steps. Each step draws a fresh batch from rng. Throws
/// DivergenceError if a weight magnitude exceeds cfg.divergence_bound.
TrainResult train(const TaskSpec& spec, const TrainConfig& cfg, RngStream& rng);
TrainResult train(TheoryModel model, const TaskSpec& spec, const TrainConfig& cfg, RngStream& rng);

/// MaxNNScore of each expert, i.e. max_nn_norm(up) · √m for the fixed
/// all-ones down-projection.
std::vector<double> expert_scores(const TheoryModel& model);

/// Copy with programming noise applied to the up-projections of the
/// experts in `analog` (per tile-column W_max, tile_size blocking). Expert s
/// draws from rng.split(s) so the same standard-normal field is reused when
/// only the noise magnitude changes.
TheoryModel program_up_projections(const TheoryModel& model, std::span<const std::size_t> analog,
                                   const NoiseSpec& noise, const RngStream& rng,
                                   std::size_t tile_size = kDefaultTileSize);

/// Fraction of samples with y·f > 0, routing taken from `routes`.
double accuracy(const TheoryModel& model, std::span<const SequenceSample> data,
                std::span<const SequenceRoute> routes);
double accuracy(const TheoryModel& model, std::span<const SequenceSample> data);

}  // namespace hetmoe
