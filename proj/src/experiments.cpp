// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>

namespace hetmoe {

void ToyInstance::validate() const {
  if (d == 0 || n == 0) throw ParameterError("toy instance: d and n must be positive");
  if (vocab > d) throw ParameterError("toy instance: vocabulary larger than d");
  if (vocab < 3) throw ParameterError("toy instance: vocabulary needs at least one irrelevant token");
  if (enforce_alpha_domain && !(alpha > 0.0 && alpha < 0.25)) {
    throw ParameterError("alpha = " + std::to_string(alpha) + " is outside the domain (0, 1/4)");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must be in (0, 1)");
}

RngStream seed_stream(std::uint64_t seed, SeedStream which) {
  return RngStream(seed, 0).split(static_cast<std::uint64_t>(which));
}

SeedModel train_seed(const ToyInstance& inst, const TrainConfig& cfg, const ProbeConfig& probe, std::uint64_t seed) {
  inst.validate();
  SeedModel out;
  out.seed = seed;
  RngStream vocab_rng = seed_stream(seed, SeedStream::kVocab);
  out.spec.vocab = build_vocab(inst.d, inst.vocab, vocab_rng, inst.rotated);
  out.spec.n = inst.n;
  out.spec.alpha = inst.alpha;
  out.spec.enforce_alpha_domain = inst.enforce_alpha_domain;
  out.spec.validate();
  RngStream train_rng = seed_stream(seed, SeedStream::kTrain);
  out.train = train(out.spec, cfg, train_rng);
  RngStream probe_rng = seed_stream(seed, SeedStream::kProbe);
  out.probe = probe_specialization(out.train.model, out.spec, probe.size, probe_rng);
  out.scores = expert_scores(out.train.model);
  return out;
}

Specialists find_specialists(const SeedModel& m, double threshold) {
  // relevant_tokens() order: +o1, −o1, +o2, −o2.
  Specialists s;
  for (std::size_t i = 0; i < 2; ++i) {
    s.rare[i] = specialized_experts(m.train.model, m.probe, 2 * i, threshold);
    s.frequent[i] = specialized_experts(m.train.model, m.probe, 2 * i + 1, threshold);
  }
  return s;
}

double measured_gamma(const Specialists& s, std::size_t k) {
  std::set<std::size_t> all(s.frequent[0].begin(), s.frequent[0].end());
  all.insert(s.frequent[1].begin(), s.frequent[1].end());
  return static_cast<double>(all.size()) / static_cast<double>(k);
}

namespace {

// Runs fn(i) for every seed index in parallel; exceptions are rethrown in
// seed order after the loop.
template <class Fn>
void for_each_seed(std::size_t count, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<std::uint64_t> sorted_seeds(std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ParameterError("experiment needs at least one seed");
  std::vector<std::uint64_t> out(seeds.begin(), seeds.end());
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) throw ParameterError("duplicate seed in seed list");
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

Lemma1Report run_lemma1_experiment(const ToyInstance& inst, const TrainConfig& cfg, const ProbeConfig& probe,
                                   std::span<const std::uint64_t> seed_list) {
  const auto seeds = sorted_seeds(seed_list);
  Lemma1Report report;
  report.seeds.resize(seeds.size());
  for_each_seed(seeds.size(), [&](std::size_t i) {
    const auto m = train_seed(inst, cfg, probe, seeds[i]);
    Lemma1Seed r;
    r.seed = seeds[i];
    r.specialists = find_specialists(m, probe.threshold);
    r.scores = m.scores;
    r.loss_initial = m.train.history.front().loss;
    r.loss_final = m.train.history.back().loss;
    r.router_attempts = m.train.init.router_attempts;
    r.init_conditions_met = m.train.init.conditions_met;
    r.ordering_holds = true;
    r.min_ratio = 0.0;
    bool first = true;
    for (std::size_t v = 0; v < 2; ++v) {
      const auto& rare = r.specialists.rare[v];
      const auto& freq = r.specialists.frequent[v];
      if (rare.empty() || freq.empty()) continue;
      r.pair_found = true;
      double max_rare = 0.0, min_freq = INFINITY;
      for (auto s : rare) max_rare = std::max(max_rare, m.scores[s]);
      for (auto s : freq) min_freq = std::min(min_freq, m.scores[s]);
      if (!(min_freq > max_rare)) r.ordering_holds = false;
      const double ratio = max_rare > 0.0 ? min_freq / max_rare : INFINITY;
      r.min_ratio = first ? ratio : std::min(r.min_ratio, ratio);
      first = false;
    }
    if (!r.pair_found) r.ordering_holds = false;
    report.seeds[i] = std::move(r);
  });
  std::vector<double> ratios;
  std::size_t halved = 0;
  for (const auto& r : report.seeds) {
    if (r.loss_final <= 0.5 * r.loss_initial) ++halved;
    if (!r.pair_found) continue;
    ++report.with_pair;
    if (r.ordering_holds) ++report.holding;
    ratios.push_back(r.min_ratio);
  }
  report.fraction_holding =
      report.with_pair ? static_cast<double>(report.holding) / static_cast<double>(report.with_pair) : 0.0;
  report.median_ratio = median(ratios);
  report.fraction_loss_halved = static_cast<double>(halved) / static_cast<double>(report.seeds.size());
  return report;
}

std::vector<double> NoiseSweepConfig::default_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 40; ++i) g.push_back(0.005 * i);
  return g;
}

void NoiseSweepConfig::validate() const {
  if (grid.empty()) throw ParameterError("noise grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0.0) throw ParameterError("noise grid values must be >= 0");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ParameterError("noise grid must be strictly increasing");
  }
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ParameterError("accuracy threshold must be in (0, 1]");
  if (test_size == 0 || draws == 0 || tile_size == 0) throw ParameterError("test size, draws and tile size must be >= 1");
}

std::optional<double> critical_noise(std::span<const double> grid, std::span<const double> accuracy,
                                     double threshold) {
  if (grid.size() != accuracy.size()) throw ShapeError("critical_noise: grid and accuracy lengths differ");
  std::optional<double> c;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (accuracy[i] < threshold) break;
    c = grid[i];
  }
  return c;
}

std::vector<double> noise_curve(const TheoryModel& model, const std::set<std::size_t>& analog,
                                std::span<const SequenceSample> test, std::span<const SequenceRoute> routes,
                                const NoiseSweepConfig& sweep, const RngStream& noise_rng) {
  const double clean = accuracy(model, test, routes);
  const std::vector<std::size_t> experts(analog.begin(), analog.end());
  std::vector<double> curve(sweep.grid.size(), 0.0);
  for (std::size_t i = 0; i < sweep.grid.size(); ++i) {
    const double c = sweep.grid[i];
    if (c == 0.0 || experts.empty()) {
      curve[i] = clean;
      continue;
    }
    double total = 0.0;
    for (std::size_t r = 0; r < sweep.draws; ++r) {
      const auto noisy =
          program_up_projections(model, experts, NoiseSpec::simplified(c), noise_rng.split(r), sweep.tile_size);
      total += accuracy(noisy, test, routes);
    }
    curve[i] = total / static_cast<double>(sweep.draws);
  }
  return curve;
}

void mean_and_se(const std::vector<std::vector<double>>& rows, std::vector<double>& mean, std::vector<double>& se) {
  mean.clear();
  se.clear();
  if (rows.empty()) return;
  const std::size_t cols = rows.front().size();
  const double n = static_cast<double>(rows.size());
  mean.assign(cols, 0.0);
  se.assign(cols, 0.0);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("mean_and_se: ragged rows");
    for (std::size_t c = 0; c < cols; ++c) mean[c] += r[c];
  }
  for (double& m : mean) m /= n;
  if (rows.size() < 2) return;
  for (std::size_t c = 0; c < cols; ++c) {
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[c] - mean[c]) * (r[c] - mean[c]);
    se[c] = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
}

bool nonincreasing_within_se(std::span<const double> mean, std::span<const double> se) {
  for (std::size_t i = 1; i < mean.size(); ++i)
    if (mean[i] > mean[i - 1] + se[i] + 1e-12) return false;
  return true;
}

namespace {

struct TestSet {
  std::vector<SequenceSample> data;
  std::vector<SequenceRoute> routes;
};

// Routing never sees noise (the router stays digital), so it is computed once.
TestSet make_test_set(const SeedModel& m, std::size_t size) {
  TestSet t;
  RngStream rng = seed_stream(m.seed, SeedStream::kTest);
  t.data = sample_dataset(m.spec, size, rng);
  t.routes.reserve(size);
  for (const auto& s : t.data) t.routes.push_back(route_sequence(m.train.model, s.tokens));
  return t;
}

std::set<std::size_t> complement(const std::set<std::size_t>& digital, std::size_t k) {
  std::set<std::size_t> out;
  for (std::size_t s = 0; s < k; ++s)
    if (!digital.count(s)) out.insert(s);
  return out;
}

}  // namespace

Theorem1Report run_theorem1_experiment(const ToyInstance& inst, const TrainConfig& cfg, const ProbeConfig& probe,
                                       const Theorem1Config& t1, std::span<const std::uint64_t> seed_list) {
  t1.sweep.validate();
  if (t1.gamma && (*t1.gamma < 0.0 || *t1.gamma > 1.0)) throw ParameterError("gamma must be in [0, 1]");
  const auto seeds = sorted_seeds(seed_list);
  const auto& grid = t1.sweep.grid;
  Theorem1Report report;
  report.grid = grid;
  report.seeds.resize(seeds.size());
  for_each_seed(seeds.size(), [&](std::size_t i) {
    const auto m = train_seed(inst, cfg, probe, seeds[i]);
    const auto& model = m.train.model;
    Theorem1Seed r;
    r.seed = seeds[i];
    r.gamma_measured = measured_gamma(find_specialists(m, probe.threshold), model.k());
    r.gamma_used = t1.gamma.value_or(r.gamma_measured);
    r.gamma_below_measured = r.gamma_used + 1e-12 < r.gamma_measured;
    ExpertScoreReport scores;
    scores.max_nn_score = m.scores;
    r.digital = make_partition(scores, r.gamma_used, ExpertMetric::kMaxNNScore).digital;

    const auto test = make_test_set(m, t1.sweep.test_size);
    const RngStream noise_rng = seed_stream(m.seed, SeedStream::kNoise);
    std::set<std::size_t> all;
    for (std::size_t s = 0; s < model.k(); ++s) all.insert(s);
    r.acc_analog = noise_curve(model, all, test.data, test.routes, t1.sweep, noise_rng);
    r.acc_hetero = noise_curve(model, complement(r.digital, model.k()), test.data, test.routes, t1.sweep, noise_rng);
    r.clean_accuracy = accuracy(model, test.data, test.routes);
    r.c_analog = critical_noise(grid, r.acc_analog, t1.sweep.threshold);
    r.c_hetero = critical_noise(grid, r.acc_hetero, t1.sweep.threshold);
    r.training_failure = !r.c_analog.has_value();
    if (!r.training_failure) {
      double denom = *r.c_analog;
      if (denom == 0.0) {
        const auto pos = std::find_if(grid.begin(), grid.end(), [](double c) { return c > 0.0; });
        denom = pos == grid.end() ? 1.0 : 0.5 * *pos;
        r.ratio_censored = true;
      }
      r.ratio = r.c_hetero.value_or(0.0) / denom;
    }
    report.seeds[i] = std::move(r);
  });

  std::vector<std::vector<double>> a_rows, h_rows;
  double ratio_sum = 0.0;
  for (const auto& r : report.seeds) {
    if (r.training_failure) continue;
    a_rows.push_back(r.acc_analog);
    h_rows.push_back(r.acc_hetero);
    ratio_sum += r.ratio;
    ++report.valid_seeds;
  }
  mean_and_se(a_rows, report.mean_analog, report.se_analog);
  mean_and_se(h_rows, report.mean_hetero, report.se_hetero);
  report.mean_ratio = report.valid_seeds ? ratio_sum / static_cast<double>(report.valid_seeds) : 0.0;
  report.monotone_analog = nonincreasing_within_se(report.mean_analog, report.se_analog);
  report.monotone_hetero = nonincreasing_within_se(report.mean_hetero, report.se_hetero);
  return report;
}

const CompareCurve& CompareReport::curve(ExpertMetric m, double gamma) const {
  for (const auto& c : curves)
    if (c.metric == m && std::abs(c.gamma - gamma) < 1e-12) return c;
  throw ParameterError("compare report has no curve for metric " + std::string(metric_name(m)) + " at gamma " +
                       std::to_string(gamma));
}

CompareReport compare_partitions(const ToyInstance& inst, const TrainConfig& cfg, const ProbeConfig& probe,
                                 const CompareConfig& cc, std::span<const std::uint64_t> seed_list) {
  cc.sweep.validate();
  if (cc.metrics.empty() || cc.gammas.empty()) throw ParameterError("compare_partitions: empty metric or gamma list");
  for (double g : cc.gammas)
    if (g < 0.0 || g > 1.0) throw ParameterError("compare_partitions: gamma must be in [0, 1]");
  if (cc.calibration_sequences == 0) throw ParameterError("compare_partitions: calibration stream is empty");
  const auto seeds = sorted_seeds(seed_list);
  const std::size_t nm = cc.metrics.size(), ng = cc.gammas.size();

  struct PerSeed {
    bool valid = false;
    std::vector<std::vector<double>> curves;  // [metric * ng + gamma][c]
  };
  std::vector<PerSeed> per_seed(seeds.size());
  for_each_seed(seeds.size(), [&](std::size_t i) {
    const auto m = train_seed(inst, cfg, probe, seeds[i]);
    const auto& model = m.train.model;
    const auto test = make_test_set(m, cc.sweep.test_size);
    const RngStream noise_rng = seed_stream(m.seed, SeedStream::kNoise);
    RngStream calib_rng = seed_stream(m.seed, SeedStream::kCalib);
    std::vector<Matrix> calib;
    for (const auto& s : sample_dataset(m.spec, cc.calibration_sequences, calib_rng)) calib.push_back(s.tokens);
    const auto scores = score_experts(model.to_block(), calib);

    auto& out = per_seed[i];
    out.valid = accuracy(model, test.data, test.routes) >= cc.sweep.threshold;
    std::vector<std::pair<std::set<std::size_t>, std::vector<double>>> cache;
    for (std::size_t mi = 0; mi < nm; ++mi) {
      for (std::size_t gi = 0; gi < ng; ++gi) {
        const auto plan = make_partition(scores, cc.gammas[gi], cc.metrics[mi]);
        const auto hit = std::find_if(cache.begin(), cache.end(), [&](const auto& e) { return e.first == plan.digital; });
        if (hit != cache.end()) {
          out.curves.push_back(hit->second);
          continue;
        }
        auto curve = noise_curve(model, plan.analog, test.data, test.routes, cc.sweep, noise_rng);
        cache.emplace_back(plan.digital, curve);
        out.curves.push_back(std::move(curve));
      }
    }
  });

  CompareReport report;
  report.grid = cc.sweep.grid;
  report.seeds = seeds;
  for (std::size_t i = 0; i < seeds.size(); ++i)
    if (per_seed[i].valid) report.valid_seeds.push_back(seeds[i]);
  for (std::size_t mi = 0; mi < nm; ++mi) {
    for (std::size_t gi = 0; gi < ng; ++gi) {
      CompareCurve c;
      c.metric = cc.metrics[mi];
      c.gamma = cc.gammas[gi];
      for (const auto& ps : per_seed) {
        if (!ps.valid) continue;
        const auto& curve = ps.curves[mi * ng + gi];
        c.per_seed.push_back(curve);
        double total = 0.0;
        for (double a : curve) total += a;
        c.grid_means.push_back(total / static_cast<double>(curve.size()));
      }
      mean_and_se(c.per_seed, c.mean, c.se);
      std::vector<double> gm, gse;
      std::vector<std::vector<double>> rows;
      for (double v : c.grid_means) rows.push_back({v});
      mean_and_se(rows, gm, gse);
      c.grid_mean = gm.empty() ? 0.0 : gm[0];
      c.grid_mean_se = gse.empty() ? 0.0 : gse[0];
      report.curves.push_back(std::move(c));
    }
  }
  return report;
}

}  // namespace hetmoe
