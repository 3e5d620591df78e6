// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/moe.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include "hetmoe/kernels.hpp"

namespace hetmoe {

double activate(Activation act, double v) {
  switch (act) {
    case Activation::kRelu:
      return v > 0.0 ? v : 0.0;
    case Activation::kSilu:
      return v / (1.0 + std::exp(-v));
  }
  return v;
}

void ExpertWeights::validate() const {
  const std::size_t dd = up.rows(), mm = up.cols();
  if (dd == 0 || mm == 0) throw ShapeError("expert: empty up-projection");
  if (down.rows() != mm || down.cols() != dd) {
    throw ShapeError("expert: down-projection must be " + std::to_string(mm) + "x" + std::to_string(dd));
  }
  if (gate && (gate->rows() != dd || gate->cols() != mm)) {
    throw ShapeError("expert: gate-projection must be " + std::to_string(dd) + "x" + std::to_string(mm));
  }
}

void MoEBlock::validate() const {
  if (experts.empty()) throw ShapeError("MoE block without experts");
  if (router.cols() != experts.size()) {
    throw ShapeError("router has " + std::to_string(router.cols()) + " columns for " +
                     std::to_string(experts.size()) + " experts");
  }
  for (const auto& e : experts) {
    e.validate();
    if (e.d() != router.rows()) throw ShapeError("expert width does not match router rows");
  }
  if (fanout == 0) throw ParameterError("fanout must be >= 1");
  if (routing == RoutingMode::kTokenChoice && fanout > experts.size()) {
    throw ParameterError("token-choice fanout exceeds expert count");
  }
}

BackendAssignment BackendAssignment::all(std::size_t k, Backend b) {
  BackendAssignment a;
  a.experts.assign(k, b);
  return a;
}

std::size_t BackendAssignment::count(Backend b) const {
  return static_cast<std::size_t>(std::count(experts.begin(), experts.end(), b));
}

namespace {

enum MatrixKey : std::uint64_t { kUp = 0, kDown = 1, kGate = 2 };

std::vector<double> project(std::span<const double> x, const Matrix& w, Backend backend, const AnalogLayer* layer) {
  if (backend == Backend::kAnalog) return analog_mvm(*layer, x);
  return vecmat(x, w);
}

// φ(x·W_up) [⊙ x·W_gate]
std::vector<double> hidden(const ExpertWeights& e, std::span<const double> x, Activation act, Backend backend,
                           const AnalogExpert* analog) {
  auto h = project(x, e.up, backend, analog ? &analog->up : nullptr);
  for (double& v : h) v = activate(act, v);
  if (e.gate) {
    const auto g = project(x, *e.gate, backend, analog && analog->gate ? &*analog->gate : nullptr);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] *= g[i];
  }
  return h;
}

}  // namespace

AnalogContext::AnalogContext(const MoEBlock& block, const BackendAssignment& assignment,
                             const AnalogOptions& options, const NoiseSpec& noise, const RngStream& rng) {
  if (assignment.experts.size() != block.k()) throw ShapeError("backend assignment size != expert count");
  experts_.resize(block.k());
  for (std::size_t s = 0; s < block.k(); ++s) {
    if (assignment.experts[s] != Backend::kAnalog) continue;
    const auto& e = block.experts[s];
    AnalogExpert ae{AnalogLayer(e.up, options, noise, rng.split({s, kUp})),
                    AnalogLayer(e.down, options, noise, rng.split({s, kDown})), std::nullopt};
    if (e.gate) ae.gate.emplace(*e.gate, options, noise, rng.split({s, kGate}));
    experts_[s].emplace(std::move(ae));
  }
}

const AnalogExpert* AnalogContext::expert(std::size_t s) const {
  return s < experts_.size() && experts_[s] ? &*experts_[s] : nullptr;
}

AnalogExpert* AnalogContext::expert(std::size_t s) {
  return s < experts_.size() && experts_[s] ? &*experts_[s] : nullptr;
}

void AnalogContext::calibrate(const MoEBlock& block, const Matrix& tokens) {
  for (std::size_t s = 0; s < experts_.size(); ++s) {
    if (!experts_[s]) continue;
    auto& ae = *experts_[s];
    const auto& e = block.experts[s];
    ae.up.calibrate(tokens);
    if (ae.gate) ae.gate->calibrate(tokens);
    Matrix h(tokens.rows(), e.m());
    for (std::size_t j = 0; j < tokens.rows(); ++j) {
      const auto hj = hidden(e, tokens.row(j), block.activation, Backend::kDigital, nullptr);
      std::copy(hj.begin(), hj.end(), h.row(j).begin());
    }
    ae.down.calibrate(h);
  }
}

void AnalogContext::set_input_range(double beta_in) {
  for (auto& ae : experts_) {
    if (!ae) continue;
    ae->up.set_input_range(beta_in);
    ae->down.set_input_range(beta_in);
    if (ae->gate) ae->gate->set_input_range(beta_in);
  }
}

std::vector<double> expert_forward(const ExpertWeights& e, std::span<const double> x, Activation act, Backend backend,
                                   const AnalogExpert* analog, double routing_weight) {
  if (x.size() != e.d()) {
    throw ShapeError("expert_forward: token length " + std::to_string(x.size()) + " vs d = " + std::to_string(e.d()));
  }
  if (backend == Backend::kAnalog && analog == nullptr) throw StateError("expert_forward: analog expert not deployed");
  const auto h = hidden(e, x, act, backend, analog);
  auto out = project(h, e.down, backend, analog ? &analog->down : nullptr);
  if (routing_weight != 1.0)
    for (double& v : out) v *= routing_weight;
  return out;
}

std::vector<std::size_t> top_indices(std::span<const double> values, std::size_t count) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                    [&](std::size_t a, std::size_t b) { return values[a] > values[b] || (values[a] == values[b] && a < b); });
  idx.resize(count);
  return idx;
}

std::vector<double> softmax(std::span<const double> values) {
  std::vector<double> out(values.size());
  if (values.empty()) return out;
  const double mx = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) sum += out[i] = std::exp(values[i] - mx);
  for (double& v : out) v /= sum;
  return out;
}

TokenRoute route_token_choice(const MoEBlock& block, std::span<const double> x) {
  if (block.fanout > block.k()) throw ParameterError("route_token_choice: fanout exceeds expert count");
  const auto scores = vecmat(x, block.router);
  TokenRoute route;
  route.experts = top_indices(scores, block.fanout);
  std::vector<double> selected;
  for (auto s : route.experts) selected.push_back(scores[s]);
  route.weights = softmax(selected);
  return route;
}

Matrix ExpertChoiceRoute::dense_weights() const {
  Matrix g(scores.rows(), scores.cols());
  for (std::size_t s = 0; s < tokens.size(); ++s)
    for (std::size_t i = 0; i < tokens[s].size(); ++i) g(tokens[s][i], s) = weights[s][i];
  return g;
}

ExpertChoiceRoute route_expert_choice(const Matrix& scores, std::size_t capacity) {
  const std::size_t n = scores.rows();
  if (capacity > n) {
    throw ParameterError("route_expert_choice: capacity " + std::to_string(capacity) + " exceeds sequence length " +
                         std::to_string(n));
  }
  ExpertChoiceRoute route;
  route.scores = scores;
  route.tokens.resize(scores.cols());
  route.weights.resize(scores.cols());
  for (std::size_t s = 0; s < scores.cols(); ++s) {
    const auto column = scores.col(s);
    route.tokens[s] = top_indices(column, capacity);
    std::vector<double> selected;
    for (auto j : route.tokens[s]) selected.push_back(column[j]);
    route.weights[s] = softmax(selected);
  }
  return route;
}

ExpertChoiceRoute route_expert_choice(const MoEBlock& block, const Matrix& tokens) {
  return route_expert_choice(matmul(tokens, block.router), block.fanout);
}

namespace {

struct Contribution {
  double score;
  std::size_t expert;
  double weight;
};

// Descending score, ties to lower expert index.
void canonical_order(std::vector<Contribution>& c) {
  std::sort(c.begin(), c.end(), [](const Contribution& a, const Contribution& b) {
    return a.score > b.score || (a.score == b.score && a.expert < b.expert);
  });
}

}  // namespace

Matrix block_forward(const MoEBlock& block, const Matrix& tokens, const BackendAssignment& assignment,
                     const AnalogContext* analog) {
  block.validate();
  if (tokens.cols() != block.d()) throw ShapeError("block_forward: token width != d");
  if (assignment.experts.size() != block.k()) throw ShapeError("block_forward: backend assignment size != k");

  const std::size_t n = tokens.rows();
  std::vector<std::vector<Contribution>> per_token(n);
  if (block.routing == RoutingMode::kTokenChoice) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto scores = vecmat(tokens.row(j), block.router);
      const auto route = route_token_choice(block, tokens.row(j));
      for (std::size_t i = 0; i < route.experts.size(); ++i)
        per_token[j].push_back({scores[route.experts[i]], route.experts[i], route.weights[i]});
    }
  } else {
    const auto route = route_expert_choice(block, tokens);
    for (std::size_t s = 0; s < block.k(); ++s)
      for (std::size_t i = 0; i < route.tokens[s].size(); ++i) {
        const std::size_t j = route.tokens[s][i];
        per_token[j].push_back({route.scores(j, s), s, route.weights[s][i]});
      }
  }

  for (std::size_t s = 0; s < block.k(); ++s) {
    if (assignment.experts[s] == Backend::kAnalog && (analog == nullptr || analog->expert(s) == nullptr)) {
      throw StateError("block_forward: expert " + std::to_string(s) + " is assigned to analog but not deployed");
    }
  }

  Matrix out(n, block.d());
  std::vector<std::exception_ptr> errors(n);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic) if (n > 8)
  for (std::ptrdiff_t jj = 0; jj < rows; ++jj) {
    const auto j = static_cast<std::size_t>(jj);
    try {
      auto& contributions = per_token[j];
      canonical_order(contributions);
      auto o = out.row(j);
      for (const auto& c : contributions) {
        const Backend b = assignment.experts[c.expert];
        const AnalogExpert* ae = analog ? analog->expert(c.expert) : nullptr;
        const auto y = expert_forward(block.experts[c.expert], tokens.row(j), block.activation, b, ae, c.weight);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += y[i];
      }
    } catch (...) {
      errors[j] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double sequence_head(const Matrix& outputs) {
  if (outputs.cols() == 0) throw ShapeError("sequence_head: zero-width tokens");
  double total = 0.0;
  for (std::size_t j = 0; j < outputs.rows(); ++j)
    for (double v : outputs.row(j)) total += v;
  return total / static_cast<double>(outputs.cols());
}

MoEBlock make_theory_block(std::span<const Matrix> up, const Matrix& router, std::span<const int> signs,
                           std::size_t capacity) {
  if (up.size() != signs.size()) throw ShapeError("make_theory_block: one sign per expert required");
  MoEBlock block;
  block.router = router;
  block.routing = RoutingMode::kExpertChoice;
  block.activation = Activation::kRelu;
  block.fanout = capacity;
  for (std::size_t s = 0; s < up.size(); ++s) {
    if (signs[s] != 1 && signs[s] != -1) throw ParameterError("make_theory_block: signs must be +1 or -1");
    ExpertWeights e{up[s], Matrix(up[s].cols(), up[s].rows(), static_cast<double>(signs[s])), std::nullopt};
    block.experts.push_back(std::move(e));
  }
  block.validate();
  return block;
}

double theory_output(const MoEBlock& block, const Matrix& tokens, const BackendAssignment& assignment,
                     const AnalogContext* analog) {
  return sequence_head(block_forward(block, tokens, assignment, analog));
}

}  // namespace hetmoe
