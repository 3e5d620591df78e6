// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hetmoe/analog.hpp"
#include "hetmoe/matrix.hpp"
#include "hetmoe/prognoise.hpp"
#include "hetmoe/rng.hpp"

// Conventions: tokens are row vectors. A sequence is an n × d matrix whose
// row j is token j, projections are x·W with W of shape d × m, and router
// scores for a sequence are X·Σ (n × k).

namespace hetmoe {

enum class ExpertKind { kMlp, kGated };
enum class Activation { kRelu, kSilu };
enum class Backend { kDigital, kAnalog };
enum class RoutingMode { kTokenChoice, kExpertChoice };

double activate(Activation act, double v);

struct ExpertWeights {
  Matrix up;                  // d × m
  Matrix down;                // m × d
  std::optional<Matrix> gate;  // d × m, gated experts only

  ExpertKind kind() const { return gate ? ExpertKind::kGated : ExpertKind::kMlp; }
  std::size_t d() const { return up.rows(); }
  std::size_t m() const { return up.cols(); }
  /// ShapeError unless up/gate are d × m and down is m × d.
  void validate() const;
};

struct MoEBlock {
  std::vector<ExpertWeights> experts;
  Matrix router;  // Σ, d × k
  RoutingMode routing = RoutingMode::kTokenChoice;
  Activation activation = Activation::kSilu;
  std::size_t fanout = 1;  // top-k experts per token, or top-l tokens per expert

  std::size_t d() const { return router.rows(); }
  std::size_t k() const { return router.cols(); }
  void validate() const;
};

struct BackendAssignment {
  std::vector<Backend> experts;
  Backend router = Backend::kDigital;  // always digital; recorded for reports

  static BackendAssignment all(std::size_t k, Backend b);
  std::size_t count(Backend b) const;
};

/// Crossbar deployment of one expert's projections.
struct AnalogExpert {
  AnalogLayer up;
  AnalogLayer down;
  std::optional<AnalogLayer> gate;
};

/// Analog deployments for the analog-assigned experts of one block.
/// Programming happens once here; stream keys are (expert, matrix).
class AnalogContext {
 public:
  AnalogContext() = default;
  AnalogContext(const MoEBlock& block, const BackendAssignment& assignment, const AnalogOptions& options,
                const NoiseSpec& noise, const RngStream& rng);

  /// nullptr for digital experts.
  const AnalogExpert* expert(std::size_t s) const;
  AnalogExpert* expert(std::size_t s);

  /// Runs calibration tokens (n × d) through every analog expert so each
  /// tile gets its input range; hidden activations feed the down tiles.
  void calibrate(const MoEBlock& block, const Matrix& tokens);
  void set_input_range(double beta_in);

 private:
  std::vector<std::optional<AnalogExpert>> experts_;
};

/// φ(x·W_up)·W_down for MLP, (φ(x·W_up) ⊙ x·W_gate)·W_down for gated, times
/// routing_weight. Analog backend routes every projection through
/// analog_mvm; the routing weight is applied digitally afterwards.
std::vector<double> expert_forward(const ExpertWeights& e, std::span<const double> x, Activation act,
                                   Backend backend = Backend::kDigital, const AnalogExpert* analog = nullptr,
                                   double routing_weight = 1.0);

struct TokenRoute {
  std::vector<std::size_t> experts;  // descending score, ties to lower index
  std::vector<double> weights;       // softmax over the selected scores
};

struct ExpertChoiceRoute {
  std::vector<std::vector<std::size_t>> tokens;  // J_s, descending score, ties to lower index
  std::vector<std::vector<double>> weights;      // G_j^(s) aligned with tokens
  Matrix scores;                                 // X·Σ, n × k

  /// Dense G (n × k) with zeros outside J_s.
  Matrix dense_weights() const;
};

/// Indices of the `count` largest values, descending, ties to lower index.
std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t count);

/// exp(v_i − max) / Σ exp(v_j − max).
std::vector<double> softmax(std::span<const double> values);

TokenRoute route_token_choice(const MoEBlock& block, std::span<const double> x);

/// Router scores can be supplied to share them with a caller.
ExpertChoiceRoute route_expert_choice(const MoEBlock& block, const Matrix& tokens);
ExpertChoiceRoute route_expert_choice(const Matrix& scores, std::size_t capacity);

/// Output tokens (n × d). Each token's expert contributions are summed in
/// descending router-score order, so relabeling experts does not change the
/// result. `analog` may be null when every expert is digital.
Matrix block_forward(const MoEBlock& block, const Matrix& tokens, const BackendAssignment& assignment,
                     const AnalogContext* analog = nullptr);

/// (1/d) Σ_j 1ᵀ x_out^(j).
double sequence_head(const Matrix& outputs);

/// The analysis model: MLP experts with trainable up-projections, fixed
/// down-projections a_s·1^(m×d), ReLU and expert-choice routing with
/// capacity l.
MoEBlock make_theory_block(std::span<const Matrix> up, const Matrix& router, std::span<const int> signs,
                           std::size_t capacity);

/// sequence_head(block_forward(...)) for a theory block.
double theory_output(const MoEBlock& block, const Matrix& tokens, const BackendAssignment& assignment,
                     const AnalogContext* analog = nullptr);

}  // namespace hetmoe
