// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace hetmoe {

struct DigitalProfile {
  double peak_ops = 624e12;   // operations / s
  double power = 400.0;       // W
  double bandwidth = 1555e9;  // bytes / s
  double mfu = 1.0;

  void validate() const;
};

/// Per-operation cost of one analog op kind.
struct AnalogOpCost {
  double latency = 0.0;  // s
  double energy = 0.0;   // J
};

struct DeviceProfile {
  DigitalProfile digital;
  std::map<std::string, AnalogOpCost> analog;

  /// NON-PAPER placeholder analog table: one 512×512 tile MVM ("tile_mvm")
  /// at 100 ns and 50 nJ. Order of magnitude only.
  static DeviceProfile defaults();
  void validate() const;
};

struct PerfEstimate {
  double latency = 0.0;      // s
  double throughput = 0.0;   // tokens / s
  double energy = 0.0;       // J
  double efficiency = 0.0;   // tokens / (W·s)
};

struct WorkloadSpec {
  double tokens = 0.0;         // tokens generated
  double digital_ops = 0.0;    // total digital operations
  double digital_bytes = 0.0;  // total digital weight transfer
  std::map<std::string, double> analog_ops;  // op kind → count
  std::size_t batch = 1;

  bool has_digital() const { return digital_ops > 0.0 || digital_bytes > 0.0; }
  bool has_analog() const;
  void validate() const;
};

/// max(ops / (MFU·peak), bytes / bandwidth).
double digital_latency(const WorkloadSpec& w, const DigitalProfile& p);

/// tokens / digital_latency. ParameterError when both terms are zero or the
/// token count is not positive.
double digital_throughput(const WorkloadSpec& w, const DigitalProfile& p);

/// throughput / power.
double digital_energy_eff(double throughput, const DigitalProfile& p);

/// tokens / Σ latency and tokens / Σ energy over analog ops. ConfigError
/// for an op kind missing from the table, ParameterError for an empty
/// analog workload.
PerfEstimate analog_estimates(const WorkloadSpec& w, const DeviceProfile& p);

/// latency = max(digital, analog); energy = power·latency + analog energy.
/// An empty analog part reduces to the digital formulas.
PerfEstimate heterogeneous_estimates(const WorkloadSpec& w, const DeviceProfile& p);

/// Digital-only, analog-only or heterogeneous, whichever parts are present.
PerfEstimate estimate(const WorkloadSpec& w, const DeviceProfile& p);

/// Shape of an MoE transformer for workload accounting.
struct MoEModelSpec {
  std::string name = "olmoe-1b-7b";
  std::size_t layers = 16;
  std::size_t hidden = 2048;
  std::size_t expert_hidden = 1024;
  std::size_t experts = 64;
  std::size_t active_experts = 8;  // top-k per token
  bool gated = true;
  std::size_t vocab = 50304;
  std::size_t shared_expert_hidden = 0;  // 0 when there is no shared expert
  double bytes_per_param = 2.0;          // FP-16 weights
  std::size_t tile_size = 512;

  double expert_params() const;     // one expert
  double attention_params() const;  // all layers
  double router_params() const;     // all layers
  double head_params() const;       // LM head
  double shared_params() const;     // all layers
  double embedding_params() const;  // input embedding table
  double dense_params() const;      // attention + router + head + shared
  double total_params() const;      // dense + all experts (embedding lookup excluded)
  /// Parameter census behind the digital-fraction column: attention, head,
  /// shared experts, embedding table, router and all experts. Router column
  /// s is counted with expert s.
  double census_params() const;
  /// Tile MVMs for one token through one expert.
  double expert_tile_mvms() const;
  double dense_tile_mvms() const;
  void validate() const;
};

enum class TransferAccounting {
  kAllPlaced,   // every digital-placed weight is read once per forward batch
  kActiveOnly,  // dense weights plus only the digital experts touched by the batch
};

struct Placement {
  double gamma = 1.0;          // fraction of experts in digital
  bool dense_digital = true;   // attention, router, head, shared experts
  TransferAccounting transfer = TransferAccounting::kAllPlaced;
  /// Counts the embedding table as digital; only the all-digital reference
  /// row does. It is a lookup, so it never enters ops or transfer.
  bool embedding_digital = false;
};

/// Workload of `steps` forward passes of `batch` tokens under a placement.
/// Ops = 2 × active parameters per token × tokens; routing is assumed
/// uniform, so a token visits active_experts·Γ digital experts per layer on
/// average. Analog work is counted as tile MVMs ("tile_mvm").
WorkloadSpec build_workload(const MoEModelSpec& model, const Placement& placement, std::size_t batch,
                            std::size_t steps = 1);

/// Share of parameters placed digitally.
double digital_param_fraction(const MoEModelSpec& model, const Placement& placement);

struct PerfRow {
  std::string label;
  double digital_fraction = 0.0;
  std::string modules;
  PerfEstimate estimate;
};

/// Full digital, full analog, dense-only digital and dense + Γ experts for
/// every Γ in `gammas`.
std::vector<PerfRow> perf_table(const MoEModelSpec& model, const DeviceProfile& profile, std::size_t batch,
                                const std::vector<double>& gammas, TransferAccounting transfer);

/// CSV header: param_in_digital_pct,modules_in_digital,throughput_tokens_per_s,
/// energy_eff_tokens_per_watt_s,latency_s,energy_j
void write_perf_csv(std::ostream& os, const std::vector<PerfRow>& rows);

}  // namespace hetmoe
