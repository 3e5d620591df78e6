// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/perfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "hetmoe/errors.hpp"

namespace hetmoe {

void DigitalProfile::validate() const {
  if (!(peak_ops > 0.0) || !(power > 0.0) || !(bandwidth > 0.0)) {
    throw ParameterError("digital profile: peak ops, power and bandwidth must be positive");
  }
  if (!(mfu > 0.0) || mfu > 1.0) throw ParameterError("digital profile: MFU must be in (0, 1]");
}

DeviceProfile DeviceProfile::defaults() {
  DeviceProfile p;
  p.analog["tile_mvm"] = {100e-9, 50e-9};
  return p;
}

void DeviceProfile::validate() const {
  digital.validate();
  for (const auto& [kind, cost] : analog) {
    if (!(cost.latency > 0.0) || !(cost.energy > 0.0)) {
      throw ParameterError("analog op '" + kind + "': latency and energy must be positive");
    }
  }
}

bool WorkloadSpec::has_analog() const {
  return std::any_of(analog_ops.begin(), analog_ops.end(), [](const auto& kv) { return kv.second > 0.0; });
}

void WorkloadSpec::validate() const {
  if (!(tokens > 0.0)) throw ParameterError("workload: token count must be positive");
  if (digital_ops < 0.0 || digital_bytes < 0.0) throw ParameterError("workload: negative digital counts");
  for (const auto& [kind, n] : analog_ops)
    if (n < 0.0) throw ParameterError("workload: negative count for analog op '" + kind + "'");
}

double digital_latency(const WorkloadSpec& w, const DigitalProfile& p) {
  p.validate();
  return std::max(w.digital_ops / (p.mfu * p.peak_ops), w.digital_bytes / p.bandwidth);
}

double digital_throughput(const WorkloadSpec& w, const DigitalProfile& p) {
  w.validate();
  const double latency = digital_latency(w, p);
  if (!(latency > 0.0)) throw ParameterError("digital_throughput: workload has no ops and no weight transfer");
  return w.tokens / latency;
}

double digital_energy_eff(double throughput, const DigitalProfile& p) {
  if (throughput < 0.0) throw ParameterError("digital_energy_eff: negative throughput");
  p.validate();
  return throughput / p.power;
}

namespace {

// Σ latency and Σ energy over analog ops.
std::pair<double, double> analog_totals(const WorkloadSpec& w, const DeviceProfile& p) {
  double latency = 0.0, energy = 0.0;
  for (const auto& [kind, n] : w.analog_ops) {
    if (n == 0.0) continue;
    const auto it = p.analog.find(kind);
    if (it == p.analog.end()) throw ConfigError("analog cost table has no entry for op kind '" + kind + "'");
    latency += n * it->second.latency;
    energy += n * it->second.energy;
  }
  return {latency, energy};
}

}  // namespace

PerfEstimate analog_estimates(const WorkloadSpec& w, const DeviceProfile& p) {
  w.validate();
  p.validate();
  if (!w.has_analog()) throw ParameterError("analog_estimates: empty analog workload");
  const auto [latency, energy] = analog_totals(w, p);
  return {latency, w.tokens / latency, energy, w.tokens / energy};
}

PerfEstimate heterogeneous_estimates(const WorkloadSpec& w, const DeviceProfile& p) {
  w.validate();
  p.validate();
  const double digital = digital_latency(w, p.digital);
  const auto [analog, analog_energy] = analog_totals(w, p);
  PerfEstimate e;
  e.latency = std::max(digital, analog);
  if (!(e.latency > 0.0)) throw ParameterError("heterogeneous_estimates: empty workload");
  e.throughput = w.tokens / e.latency;
  e.energy = p.digital.power * e.latency + analog_energy;
  e.efficiency = w.tokens / e.energy;
  return e;
}

PerfEstimate estimate(const WorkloadSpec& w, const DeviceProfile& p) {
  if (!w.has_analog()) {
    PerfEstimate e;
    e.throughput = digital_throughput(w, p.digital);
    e.latency = w.tokens / e.throughput;
    e.energy = p.digital.power * e.latency;
    e.efficiency = digital_energy_eff(e.throughput, p.digital);
    return e;
  }
  if (!w.has_digital()) return analog_estimates(w, p);
  return heterogeneous_estimates(w, p);
}

double MoEModelSpec::expert_params() const {
  return static_cast<double>((gated ? 3 : 2) * hidden * expert_hidden);
}

double MoEModelSpec::attention_params() const { return static_cast<double>(layers * 4 * hidden * hidden); }

double MoEModelSpec::router_params() const { return static_cast<double>(layers * hidden * experts); }

double MoEModelSpec::head_params() const { return static_cast<double>(vocab * hidden); }

double MoEModelSpec::shared_params() const {
  return static_cast<double>(layers * (gated ? 3 : 2) * hidden * shared_expert_hidden);
}

double MoEModelSpec::embedding_params() const { return static_cast<double>(vocab * hidden); }

double MoEModelSpec::census_params() const {
  return attention_params() + head_params() + shared_params() + embedding_params() + router_params() +
         static_cast<double>(layers * experts) * expert_params();
}

double MoEModelSpec::dense_params() const {
  return attention_params() + router_params() + head_params() + shared_params();
}

double MoEModelSpec::total_params() const {
  return dense_params() + static_cast<double>(layers * experts) * expert_params();
}

namespace {

double tiles(std::size_t rows, std::size_t cols, std::size_t tile) {
  return std::ceil(static_cast<double>(rows) / static_cast<double>(tile)) *
         std::ceil(static_cast<double>(cols) / static_cast<double>(tile));
}

}  // namespace

double MoEModelSpec::expert_tile_mvms() const {
  return (gated ? 2.0 : 1.0) * tiles(hidden, expert_hidden, tile_size) + tiles(expert_hidden, hidden, tile_size);
}

double MoEModelSpec::dense_tile_mvms() const {
  const double per_layer = 4.0 * tiles(hidden, hidden, tile_size) + tiles(hidden, experts, tile_size) +
                           (shared_expert_hidden == 0 ? 0.0
                                                      : (gated ? 2.0 : 1.0) * tiles(hidden, shared_expert_hidden, tile_size) +
                                                            tiles(shared_expert_hidden, hidden, tile_size));
  return static_cast<double>(layers) * per_layer + tiles(hidden, vocab, tile_size);
}

void MoEModelSpec::validate() const {
  if (layers == 0 || hidden == 0 || expert_hidden == 0 || experts == 0 || vocab == 0 || tile_size == 0) {
    throw ParameterError("model spec: sizes must be positive");
  }
  if (active_experts == 0 || active_experts > experts) throw ParameterError("model spec: active experts out of range");
  if (!(bytes_per_param > 0.0)) throw ParameterError("model spec: bytes per parameter must be positive");
}

namespace {

double digital_expert_count(const MoEModelSpec& model, double gamma) {
  return std::ceil(gamma * static_cast<double>(model.experts) - 1e-9);
}

}  // namespace

double digital_param_fraction(const MoEModelSpec& model, const Placement& placement) {
  model.validate();
  const double experts = digital_expert_count(model, placement.gamma) * static_cast<double>(model.layers);
  const double dense = model.attention_params() + model.head_params() + model.shared_params();
  const double per_expert = model.expert_params() + static_cast<double>(model.hidden);  // plus its router column
  const double digital = (placement.dense_digital ? dense : 0.0) + experts * per_expert +
                         (placement.embedding_digital ? model.embedding_params() : 0.0);
  return digital / model.census_params();
}

WorkloadSpec build_workload(const MoEModelSpec& model, const Placement& placement, std::size_t batch,
                            std::size_t steps) {
  model.validate();
  if (placement.gamma < 0.0 || placement.gamma > 1.0) throw ParameterError("placement: gamma must be in [0, 1]");
  if (batch == 0 || steps == 0) throw ParameterError("build_workload: batch and steps must be >= 1");

  const double e_total = static_cast<double>(model.experts);
  const double e_digital = digital_expert_count(model, placement.gamma);
  const double share_digital = e_digital / e_total;
  const double layers = static_cast<double>(model.layers);
  const double active = static_cast<double>(model.active_experts);
  const double tokens = static_cast<double>(batch * steps);

  // Per token and layer: active·share digital experts, the rest analog.
  const double dense_active = model.dense_params();
  const double digital_active =
      (placement.dense_digital ? dense_active : 0.0) + layers * active * share_digital * model.expert_params();

  WorkloadSpec w;
  w.tokens = tokens;
  w.batch = batch;
  w.digital_ops = 2.0 * digital_active * tokens;

  double bytes_per_pass = placement.dense_digital ? dense_active : 0.0;
  if (placement.transfer == TransferAccounting::kAllPlaced) {
    bytes_per_pass += layers * e_digital * model.expert_params();
  } else if (e_digital > 0.0) {
    // Expected distinct digital experts touched by `batch` tokens per layer.
    const double miss = std::pow(1.0 - active / e_total, static_cast<double>(batch));
    bytes_per_pass += layers * e_digital * (1.0 - miss) * model.expert_params();
  }
  w.digital_bytes = bytes_per_pass * model.bytes_per_param * static_cast<double>(steps);

  double analog_tiles = layers * active * (1.0 - share_digital) * model.expert_tile_mvms();
  if (!placement.dense_digital) analog_tiles += model.dense_tile_mvms();
  if (analog_tiles > 0.0) w.analog_ops["tile_mvm"] = analog_tiles * tokens;
  return w;
}

std::vector<PerfRow> perf_table(const MoEModelSpec& model, const DeviceProfile& profile, std::size_t batch,
                                const std::vector<double>& gammas, TransferAccounting transfer) {
  profile.validate();
  std::vector<PerfRow> rows;
  auto add = [&](std::string label, std::string modules, Placement placement) {
    placement.transfer = transfer;
    const auto w = build_workload(model, placement, batch);
    rows.push_back({std::move(label), digital_param_fraction(model, placement), std::move(modules), estimate(w, profile)});
  };
  add("digital", "all", {1.0, true, transfer, true});
  add("analog", "none", {0.0, false, transfer});
  add("heterogeneous", "dense", {0.0, true, transfer});
  for (double g : gammas) {
    std::ostringstream modules;
    modules << "dense+" << g * 100.0 << "% experts";
    add("heterogeneous", modules.str(), {g, true, transfer});
  }
  return rows;
}

void write_perf_csv(std::ostream& os, const std::vector<PerfRow>& rows) {
  os << "label,param_in_digital_pct,modules_in_digital,throughput_tokens_per_s,energy_eff_tokens_per_watt_s,"
        "latency_s,energy_j\n";
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.label << ',' << r.digital_fraction * 100.0 << ',' << r.modules << ',' << r.estimate.throughput << ','
       << r.estimate.efficiency << ',' << r.estimate.latency << ',' << r.estimate.energy << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

}  // namespace hetmoe
