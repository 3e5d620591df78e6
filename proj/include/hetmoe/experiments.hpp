// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "hetmoe/partition.hpp"
#include "hetmoe/synthetic.hpp"
#include "hetmoe/trainer.hpp"

namespace hetmoe {

/// Synthetic task sizes.
struct ToyInstance {
  std::size_t d = 64;
  std::size_t vocab = 32;
  std::size_t n = 8;
  double alpha = 0.125;
  bool rotated = false;
  bool enforce_alpha_domain = true;

  void validate() const;
};

struct ProbeConfig {
  std::size_t size = 256;   // sequences per relevant token
  double threshold = 0.9;   // p at or above this counts as specialized
};

/// One trained seed: task, model, specialization probe.
struct SeedModel {
  std::uint64_t seed = 0;
  TaskSpec spec;
  TrainResult train;
  SpecializationProbe probe;
  std::vector<double> scores;  // MaxNNScore per expert
};

/// Sub-streams of RngStream(seed, 0) used by every experiment, so different
/// recipes train identical models for the same seed.
enum class SeedStream : std::uint64_t { kVocab = 11, kTrain = 12, kProbe = 13, kTest = 14, kNoise = 15, kCalib = 16 };
RngStream seed_stream(std::uint64_t seed, SeedStream which);

SeedModel train_seed(const ToyInstance& inst, const TrainConfig& cfg, const ProbeConfig& probe, std::uint64_t seed);

/// Group-matched specialists for v ∈ {o1, o2} (index 0, 1): `rare[i]` are
/// specialized on +v, `frequent[i]` on −v.
struct Specialists {
  std::vector<std::size_t> rare[2];
  std::vector<std::size_t> frequent[2];
};
Specialists find_specialists(const SeedModel& m, double threshold);

/// |frequent[0]| + |frequent[1]| over k, counting each expert once.
double measured_gamma(const Specialists& s, std::size_t k);

struct Lemma1Seed {
  std::uint64_t seed = 0;
  Specialists specialists;
  std::vector<double> scores;
  bool pair_found = false;      // some v has both a +v and a −v specialist
  bool ordering_holds = false;  // every such v: min −v score > max +v score
  double min_ratio = 0.0;       // min over such v of min(−v score) / max(+v score)
  double loss_initial = 0.0;
  double loss_final = 0.0;
  std::size_t router_attempts = 0;
  bool init_conditions_met = true;
};

struct Lemma1Report {
  std::vector<Lemma1Seed> seeds;  // sorted by seed
  std::size_t with_pair = 0;
  std::size_t holding = 0;
  double fraction_holding = 0.0;  // holding / with_pair (0 when no pair)
  double median_ratio = 0.0;      // over seeds with a pair
  double fraction_loss_halved = 0.0;
  bool inconclusive() const { return with_pair == 0; }
};

Lemma1Report run_lemma1_experiment(const ToyInstance& inst, const TrainConfig& cfg, const ProbeConfig& probe,
                                   std::span<const std::uint64_t> seeds);

struct NoiseSweepConfig {
  std::vector<double> grid = default_grid();
  double threshold = 0.99;
  std::size_t test_size = 2000;
  std::size_t draws = 2;  // noise realizations averaged per grid point
  std::size_t tile_size = kDefaultTileSize;

  static std::vector<double> default_grid();  // 0, 0.005, ..., 0.2
  void validate() const;
};

/// Largest grid c such that every grid point up to c has accuracy at or
/// above threshold; nullopt when the first point already fails.
std::optional<double> critical_noise(std::span<const double> grid, std::span<const double> accuracy,
                                     double threshold);

/// Accuracy (mean over draws) along the grid with simplified noise on the
/// up-projections of `analog` experts. Draw r uses noise_rng.split(r) and
/// expert s within it split(s), so curves for different c and different
/// analog sets share noise fields.
std::vector<double> noise_curve(const TheoryModel& model, const std::set<std::size_t>& analog,
                                std::span<const SequenceSample> test, std::span<const SequenceRoute> routes,
                                const NoiseSweepConfig& sweep, const RngStream& noise_rng);

struct Theorem1Config {
  NoiseSweepConfig sweep;
  std::optional<double> gamma;  // nullopt: use the measured γ
};

struct Theorem1Seed {
  std::uint64_t seed = 0;
  double gamma_measured = 0.0;
  double gamma_used = 0.0;
  bool gamma_below_measured = false;
  std::set<std::size_t> digital;
  double clean_accuracy = 0.0;
  std::vector<double> acc_analog;
  std::vector<double> acc_hetero;
  std::optional<double> c_analog;
  std::optional<double> c_hetero;
  bool training_failure = false;  // clean accuracy below threshold
  /// c_hetero / c_analog; c_analog = 0 is replaced by half the first
  /// positive grid step and the ratio is marked censored.
  double ratio = 0.0;
  bool ratio_censored = false;
};

struct Theorem1Report {
  std::vector<double> grid;
  std::vector<Theorem1Seed> seeds;
  std::vector<double> mean_analog, se_analog, mean_hetero, se_hetero;  // over valid seeds
  std::size_t valid_seeds = 0;
  double mean_ratio = 0.0;  // over valid seeds
  bool monotone_analog = true;
  bool monotone_hetero = true;
};

/// Mean and standard error (sample std / √n) per column over the rows.
void mean_and_se(const std::vector<std::vector<double>>& rows, std::vector<double>& mean, std::vector<double>& se);

/// Nonincreasing within tolerance: mean[i+1] ≤ mean[i] + se[i+1] for all i.
bool nonincreasing_within_se(std::span<const double> mean, std::span<const double> se);

Theorem1Report run_theorem1_experiment(const ToyInstance& inst, const TrainConfig& cfg, const ProbeConfig& probe,
                                       const Theorem1Config& t1, std::span<const std::uint64_t> seeds);

struct CompareConfig {
  NoiseSweepConfig sweep;
  std::vector<double> gammas{0.0, 0.125, 0.25};
  std::vector<ExpertMetric> metrics{std::begin(kAllMetrics), std::end(kAllMetrics)};
  std::size_t calibration_sequences = 256;
};

struct CompareCurve {
  ExpertMetric metric = ExpertMetric::kMaxNNScore;
  double gamma = 0.0;
  std::vector<std::vector<double>> per_seed;  // [seed][c], valid seeds only
  std::vector<double> mean, se;
  std::vector<double> grid_means;  // per valid seed, accuracy averaged over the grid
  double grid_mean = 0.0;
  double grid_mean_se = 0.0;
};

struct CompareReport {
  std::vector<double> grid;
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> valid_seeds;  // clean accuracy at or above threshold
  std::vector<CompareCurve> curves;        // metrics × gammas, metric-major

  const CompareCurve& curve(ExpertMetric m, double gamma) const;
};

CompareReport compare_partitions(const ToyInstance& inst, const TrainConfig& cfg, const ProbeConfig& probe,
                                 const CompareConfig& cc, std::span<const std::uint64_t> seeds);

}  // namespace hetmoe
