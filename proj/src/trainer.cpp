// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hetmoe/analog.hpp"
#include "hetmoe/kernels.hpp"
#include "hetmoe/partition.hpp"

namespace hetmoe {

namespace {

// Sub-stream keys of the training seed.
enum StreamKey : std::uint64_t { kInitUp = 1, kInitRouter = 2, kBatches = 3, kMonitor = 4 };

constexpr std::size_t kChunk = 16;  // samples per fixed reduction chunk

}  // namespace

void TrainConfig::validate() const {
  if (steps > 0 && batch == 0) throw ParameterError("batch size must be >= 1");
  if (eta_expert < 0.0 || eta_router < 0.0) throw ParameterError("learning rates must be >= 0");
  if (experts == 0 || width == 0) throw ParameterError("expert count and width must be >= 1");
  if (capacity == 0) throw ParameterError("capacity l must be >= 1");
  if (init_up < 0.0 || init_router < 0.0) throw ParameterError("init scales must be >= 0");
  if (!(divergence_bound > 0.0)) throw ParameterError("divergence bound must be positive");
  const auto s = resolved_signs();
  if (s.size() != experts) throw ParameterError("signs: one entry per expert required");
  long diff = 0;
  for (int a : s) {
    if (a != 1 && a != -1) throw ParameterError("signs must be +1 or -1");
    diff += a;
  }
  const long bound = std::lround(std::sqrt(static_cast<double>(experts)));
  if (std::labs(diff) > bound) {
    throw ParameterError("sign imbalance " + std::to_string(std::labs(diff)) + " exceeds round(sqrt(k)) = " +
                         std::to_string(bound));
  }
}

std::vector<int> TrainConfig::resolved_signs() const {
  if (!signs.empty()) return signs;
  std::vector<int> s(experts, -1);
  std::fill_n(s.begin(), (experts + 1) / 2, 1);
  return s;
}

MoEBlock TheoryModel::to_block() const { return make_theory_block(up, router, signs, capacity); }

double TheoryModel::max_abs_weight() const {
  double mx = 0.0;
  for (const auto& w : up)
    for (double v : w.data()) mx = std::max(mx, std::abs(v));
  for (double v : router.data()) mx = std::max(mx, std::abs(v));
  return mx;
}

SequenceRoute route_sequence(const TheoryModel& model, const Matrix& tokens) {
  if (tokens.cols() != model.d()) throw ShapeError("route_sequence: token width != d");
  return route_expert_choice(matmul(tokens, model.router), model.capacity);
}

namespace {

// Σ_r relu(⟨w_r, x⟩) plus the pre-activations. Zero token entries are
// skipped (synthetic tokens are sparse in basis mode).
double neuron_sum(const Matrix& up, std::span<const double> x, std::vector<double>& pre) {
  pre.assign(up.cols(), 0.0);
  for (std::size_t q = 0; q < x.size(); ++q) {
    if (x[q] == 0.0) continue;
    const auto w = up.row(q);
    for (std::size_t r = 0; r < pre.size(); ++r) pre[r] += x[q] * w[r];
  }
  double h = 0.0;
  for (double v : pre) h += v > 0.0 ? v : 0.0;
  return h;
}

}  // namespace

double forward_theory(const TheoryModel& model, const Matrix& tokens, const SequenceRoute& route) {
  double f = 0.0;
  std::vector<double> pre;
  for (std::size_t s = 0; s < model.k(); ++s) {
    double fs = 0.0;
    for (std::size_t i = 0; i < route.tokens[s].size(); ++i)
      fs += route.weights[s][i] * neuron_sum(model.up[s], tokens.row(route.tokens[s][i]), pre);
    f += model.signs[s] * fs;
  }
  return f;
}

double forward_theory(const TheoryModel& model, const Matrix& tokens) {
  return forward_theory(model, tokens, route_sequence(model, tokens));
}

double forward_theory_head(const TheoryModel& model, const Matrix& tokens) {
  const auto block = model.to_block();
  return theory_output(block, tokens, BackendAssignment::all(model.k(), Backend::kDigital));
}

namespace {

Gradients zero_grads(const TheoryModel& model) {
  Gradients g;
  g.up.assign(model.k(), Matrix(model.d(), model.m()));
  g.router = Matrix(model.d(), model.k());
  return g;
}

void add_into(Gradients& acc, const Gradients& g) {
  for (std::size_t s = 0; s < acc.up.size(); ++s) {
    auto a = acc.up[s].data();
    auto b = g.up[s].data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }
  auto a = acc.router.data();
  auto b = g.router.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void scale(Gradients& g, double c) {
  for (auto& w : g.up)
    for (double& v : w.data()) v *= c;
  for (double& v : g.router.data()) v *= c;
}

// Adds one sample's surrogate gradient into g; returns its hinge loss.
double accumulate_sample(const TheoryModel& model, const SequenceSample& sample, Gradients& g) {
  const auto& x = sample.tokens;
  const auto route = route_sequence(model, x);
  const std::size_t d = model.d(), m = model.m();
  const double y = sample.label;
  std::vector<double> pre;
  std::vector<double> h;
  std::vector<double> xbar(d);
  double f = 0.0;
  for (std::size_t s = 0; s < model.k(); ++s) {
    const auto& J = route.tokens[s];
    const auto& G = route.weights[s];
    const double a = model.signs[s];
    h.assign(J.size(), 0.0);
    std::fill(xbar.begin(), xbar.end(), 0.0);
    for (std::size_t i = 0; i < J.size(); ++i) {
      const auto xj = x.row(J[i]);
      h[i] = neuron_sum(model.up[s], xj, pre);
      f += a * G[i] * h[i];
      const double coef = -y * a * G[i];
      auto& gw = g.up[s];
      for (std::size_t q = 0; q < d; ++q) {
        if (xj[q] == 0.0) continue;
        auto gq = gw.row(q);
        for (std::size_t r = 0; r < m; ++r)
          if (pre[r] >= 0.0) gq[r] += coef * xj[q];
        xbar[q] += G[i] * xj[q];
      }
    }
    // dG_j/dσ_s = G_j (x_j − x̄_s) with J_s fixed.
    for (std::size_t i = 0; i < J.size(); ++i) {
      const double coef = -y * a * G[i] * h[i];
      if (coef == 0.0) continue;
      const auto xj = x.row(J[i]);
      for (std::size_t q = 0; q < d; ++q) g.router(q, s) += coef * (xj[q] - xbar[q]);
    }
  }
  return std::max(1.0 - y * f, 0.0);
}

void check_batch(const TheoryModel& model, std::span<const SequenceSample> batch) {
  if (batch.empty()) throw ParameterError("hinge_loss_and_grads: empty batch");
  for (const auto& b : batch) {
    if (b.tokens.cols() != model.d()) throw ShapeError("hinge_loss_and_grads: token width != d");
    if (b.tokens.rows() < model.capacity) throw ParameterError("hinge_loss_and_grads: capacity l exceeds sequence length");
  }
}

}  // namespace

LossAndGrads hinge_loss_and_grads(const TheoryModel& model, std::span<const SequenceSample> batch) {
  check_batch(model, batch);
  const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<Gradients> partial(chunks);
  std::vector<double> losses(chunks, 0.0);
  const auto nchunks = static_cast<std::ptrdiff_t>(chunks);
#pragma omp parallel for schedule(static) if (chunks > 1)
  for (std::ptrdiff_t cc = 0; cc < nchunks; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    partial[c] = zero_grads(model);
    const std::size_t end = std::min(batch.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) losses[c] += accumulate_sample(model, batch[i], partial[c]);
  }
  LossAndGrads out{0.0, zero_grads(model)};
  for (std::size_t c = 0; c < chunks; ++c) {
    add_into(out.grads, partial[c]);
    out.loss += losses[c];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  scale(out.grads, inv);
  out.loss *= inv;
  return out;
}

namespace serial {
LossAndGrads hinge_loss_and_grads(const TheoryModel& model, std::span<const SequenceSample> batch) {
  check_batch(model, batch);
  LossAndGrads out{0.0, zero_grads(model)};
  for (const auto& b : batch) out.loss += accumulate_sample(model, b, out.grads);
  const double inv = 1.0 / static_cast<double>(batch.size());
  scale(out.grads, inv);
  out.loss *= inv;
  return out;
}
}  // namespace serial

SpecializationProbe probe_specialization(const TheoryModel& model, const TaskSpec& spec, std::size_t probe_size,
                                         RngStream& rng) {
  if (probe_size == 0) throw ParameterError("probe_size must be >= 1");
  SpecializationProbe probe;
  probe.tokens = spec.relevant_tokens();
  probe.p = Matrix(probe.tokens.size(), model.k());
  probe.p_routed = Matrix(probe.tokens.size(), model.k());
  const double threshold = 1.0 / static_cast<double>(model.capacity);
  for (std::size_t t = 0; t < probe.tokens.size(); ++t) {
    for (std::size_t i = 0; i < probe_size; ++i) {
      const auto sample = sample_sequence_with(spec, probe.tokens[t], rng);
      const auto route = route_sequence(model, sample.tokens);
      for (std::size_t s = 0; s < model.k(); ++s) {
        const auto& J = route.tokens[s];
        const auto it = std::find(J.begin(), J.end(), sample.relevant_position);
        if (it == J.end()) continue;
        probe.p_routed(t, s) += 1.0;
        if (route.weights[s][static_cast<std::size_t>(it - J.begin())] >= threshold) probe.p(t, s) += 1.0;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(probe_size);
  for (double& v : probe.p.data()) v *= inv;
  for (double& v : probe.p_routed.data()) v *= inv;
  return probe;
}

namespace {

int label_group(const TaskSpec& spec, SignedToken v) { return v.id == spec.o1 ? 1 : -1; }

}  // namespace

std::vector<std::size_t> specialized_experts(const TheoryModel& model, const SpecializationProbe& probe,
                                             std::size_t token_row, double threshold) {
  // Token rows follow relevant_tokens(): the first two carry label +1.
  const int group = token_row < 2 ? 1 : -1;
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < model.k(); ++s)
    if (model.signs[s] == group && probe.p(token_row, s) >= threshold) out.push_back(s);
  return out;
}

double routed_negation_probability(const Matrix& router, std::size_t s, SignedToken v, const TaskSpec& spec,
                                   std::size_t capacity) {
  const auto vec = spec.vector_of(v);
  double z = 0.0;  // score of −v
  for (std::size_t q = 0; q < vec.size(); ++q) z -= vec[q] * router(q, s);
  std::size_t above = 0, irrelevant = 0;
  for (std::size_t id = 0; id < spec.vocab_size(); ++id) {
    if (id == spec.o1 || id == spec.o2) continue;
    ++irrelevant;
    double score = 0.0;
    for (std::size_t q = 0; q < spec.d(); ++q) score += spec.vocab(id, q) * router(q, s);
    if (score > z) ++above;
  }
  const double p = static_cast<double>(above) / static_cast<double>(irrelevant);
  // −v is selected iff fewer than l of the n−1 irrelevant tokens outrank it.
  const std::size_t trials = spec.n - 1;
  double total = 0.0;
  for (std::size_t c = 0; c < std::min(capacity, trials + 1); ++c) {
    const double log_binom = std::lgamma(trials + 1.0) - std::lgamma(c + 1.0) - std::lgamma(trials - c + 1.0);
    const double pc = c == 0 ? 1.0 : std::pow(p, static_cast<double>(c));
    const double qc = trials - c == 0 ? 1.0 : std::pow(1.0 - p, static_cast<double>(trials - c));
    total += std::exp(log_binom) * pc * qc;
  }
  return std::min(total, 1.0);
}

bool init_router_admissible(const Matrix& router, std::span<const int> signs, const TaskSpec& spec,
                            std::size_t capacity) {
  const double bound = 1.0 / static_cast<double>(spec.d());
  for (const auto& v : spec.relevant_tokens()) {
    const int group = label_group(spec, v);
    bool found = false;
    for (std::size_t s = 0; s < signs.size() && !found; ++s)
      found = signs[s] == group && routed_negation_probability(router, s, v, spec, capacity) <= bound;
    if (!found) return false;
  }
  return true;
}

TheoryModel init_model(const TaskSpec& spec, const TrainConfig& cfg, RngStream& rng, InitReport* report) {
  spec.validate();
  cfg.validate();
  if (cfg.capacity > spec.n) throw ParameterError("capacity l exceeds sequence length n");
  TheoryModel model;
  model.signs = cfg.resolved_signs();
  model.capacity = cfg.capacity;
  RngStream up_rng = rng.split(kInitUp);
  for (std::size_t s = 0; s < cfg.experts; ++s) model.up.push_back(gaussian(up_rng, 0.0, cfg.init_up, spec.d(), cfg.width));
  RngStream router_rng = rng.split(kInitRouter);
  InitReport rep;
  for (;;) {
    model.router = gaussian(router_rng, 0.0, cfg.init_router, spec.d(), cfg.experts);
    ++rep.router_attempts;
    if (!cfg.enforce_init_conditions) break;
    if (init_router_admissible(model.router, model.signs, spec, cfg.capacity)) break;
    if (rep.router_attempts >= cfg.max_init_attempts) {
      rep.conditions_met = false;
      break;
    }
  }
  if (report) *report = rep;
  return model;
}

std::vector<double> expert_scores(const TheoryModel& model) {
  std::vector<double> out;
  const double down = std::sqrt(static_cast<double>(model.m()));
  for (const auto& w : model.up) out.push_back(max_nn_norm(w) * down);
  return out;
}

namespace {

double mean_hinge(const TheoryModel& model, std::span<const SequenceSample> data) {
  double total = 0.0;
  for (const auto& s : data) total += std::max(1.0 - s.label * forward_theory(model, s.tokens), 0.0);
  return total / static_cast<double>(data.size());
}

}  // namespace

TrainResult train(const TaskSpec& spec, const TrainConfig& cfg, RngStream& rng) {
  InitReport init;
  auto model = init_model(spec, cfg, rng, &init);
  auto result = train(std::move(model), spec, cfg, rng);
  result.init = init;
  return result;
}

TrainResult train(TheoryModel model, const TaskSpec& spec, const TrainConfig& cfg, RngStream& rng) {
  spec.validate();
  cfg.validate();
  if (model.k() == 0 || model.d() != spec.d()) throw ShapeError("train: model does not match task width");
  RngStream batch_rng = rng.split(kBatches);
  RngStream monitor_rng = rng.split(kMonitor);
  const auto monitor = sample_dataset(spec, std::max<std::size_t>(cfg.monitor_size, 1), monitor_rng);

  TrainResult result;
  auto record = [&](std::size_t step) {
    result.history.push_back({step, mean_hinge(model, monitor), expert_scores(model)});
  };
  const std::size_t every = cfg.history_every;
  record(0);
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const auto batch = sample_dataset(spec, cfg.batch, batch_rng);
    const auto lg = hinge_loss_and_grads(model, batch);
    for (std::size_t s = 0; s < model.k(); ++s) {
      auto w = model.up[s].data();
      auto g = lg.grads.up[s].data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.eta_expert * g[i];
    }
    auto r = model.router.data();
    auto gr = lg.grads.router.data();
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= cfg.eta_router * gr[i];
    const double mx = model.max_abs_weight();
    if (!(mx <= cfg.divergence_bound)) {
      throw DivergenceError("training diverged at step " + std::to_string(t) + ": max |weight| = " +
                            std::to_string(mx) + " exceeds bound " + std::to_string(cfg.divergence_bound));
    }
    if ((every > 0 && t % every == 0) || t == cfg.steps) {
      if (result.history.back().step != t) record(t);
    }
  }
  result.model = std::move(model);
  return result;
}

TheoryModel program_up_projections(const TheoryModel& model, std::span<const std::size_t> analog,
                                   const NoiseSpec& noise, const RngStream& rng, std::size_t tile_size) {
  TheoryModel out = model;
  AnalogOptions options;
  options.tile_size = tile_size;
  options.quantize = false;
  for (std::size_t s : analog) {
    if (s >= model.k()) throw ParameterError("program_up_projections: expert index out of range");
    out.up[s] = AnalogLayer(model.up[s], options, noise, rng.split(s)).programmed();
  }
  return out;
}

double accuracy(const TheoryModel& model, std::span<const SequenceSample> data,
                std::span<const SequenceRoute> routes) {
  if (data.empty()) throw ParameterError("accuracy: empty data set");
  if (routes.size() != data.size()) throw ShapeError("accuracy: one route per sample required");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].label * forward_theory(model, data[i].tokens, routes[i]) > 0.0) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double accuracy(const TheoryModel& model, std::span<const SequenceSample> data) {
  std::vector<SequenceRoute> routes;
  routes.reserve(data.size());
  for (const auto& s : data) routes.push_back(route_sequence(model, s.tokens));
  return accuracy(model, data, routes);
}

}  // namespace hetmoe
