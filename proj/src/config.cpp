// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hetmoe {

using nlohmann::json;

const std::vector<ExperimentInfo>& experiment_catalog() {
  static const std::vector<ExperimentInfo> catalog{
      {"noise-validate", "Monte-Carlo std of programmed weights vs. the programming-noise model"},
      {"quantizer-validate", "DAC/ADC error bound, idempotence, monotonicity and saturation checks"},
      {"lemma1", "train the toy MoE per seed and compare MaxNNScore of rare vs. frequent specialists"},
      {"theorem1", "noise sweep of all-analog vs. heterogeneous inference, c*_A and c*_H per seed"},
      {"partition-compare", "noise sweeps for every expert-selection metric and digital fraction"},
      {"perf-table", "throughput and energy efficiency of digital, analog and heterogeneous placement"},
      {"calibrate", "grid search of the DAC/ADC range multipliers on a toy analog MoE block"},
  };
  return catalog;
}

TrainConfig default_train_config() { return TrainConfig{}; }

namespace {

// Reads fields from one JSON object and rejects keys it was not asked about.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }
  ~Reader() = default;

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string sub(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_ + ": " + msg); }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json branch_json(const NoiseBranch& b) { return json::array({b.c0, b.c1, b.c2, b.c3}); }

void read_branch(const json& j, NoiseBranch& b, const std::string& path) {
  if (!j.is_array() || j.size() != 4) throw ConfigError(path + ": expected [c0, c1, c2, c3]");
  b = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json noise_json(const NoiseSpec& n) {
  return {{"mode", n.mode == NoiseSpec::Mode::kFull ? "full" : "simplified"},
          {"high", branch_json(n.high)},
          {"low", branch_json(n.low)},
          {"threshold", n.threshold},
          {"c", n.c},
          {"scale", n.scale}};
}

void read_noise(const json& j, NoiseSpec& n, const std::string& path) {
  Reader r(j, path);
  std::string mode = n.mode == NoiseSpec::Mode::kFull ? "full" : "simplified";
  r.get("mode", mode);
  if (mode == "full") {
    n.mode = NoiseSpec::Mode::kFull;
  } else if (mode == "simplified") {
    n.mode = NoiseSpec::Mode::kSimplified;
  } else {
    r.fail("mode must be 'full' or 'simplified'");
  }
  if (const json* h = r.child("high")) read_branch(*h, n.high, path + ".high");
  if (const json* l = r.child("low")) read_branch(*l, n.low, path + ".low");
  r.get("threshold", n.threshold);
  r.get("c", n.c);
  r.get("scale", n.scale);
  r.finish();
}

json quantizer_json(const QuantizerConfig& q) {
  return {{"dac_bits", q.dac_bits}, {"adc_bits", q.adc_bits}, {"kappa", q.kappa}, {"lambda", q.lambda},
          {"ema_decay", q.ema_decay}};
}

void read_quantizer(const json& j, QuantizerConfig& q, const std::string& path) {
  Reader r(j, path);
  r.get("dac_bits", q.dac_bits);
  r.get("adc_bits", q.adc_bits);
  r.get("kappa", q.kappa);
  r.get("lambda", q.lambda);
  r.get("ema_decay", q.ema_decay);
  r.finish();
}

json grid_json(const std::vector<double>& g) { return g; }

// Either a list or {"start", "stop", "step"} (inclusive of stop).
std::vector<double> read_grid(const json& j, const std::string& path) {
  if (j.is_array()) return j.get<std::vector<double>>();
  Reader r(j, path);
  double start = 0.0, stop = 0.0, step = 0.0;
  r.get("start", start);
  r.get("stop", stop);
  r.get("step", step);
  r.finish();
  if (!(step > 0.0) || stop < start) r.fail("range needs step > 0 and stop >= start");
  std::vector<double> g;
  const auto count = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  for (long i = 0; i <= count; ++i) g.push_back(start + step * static_cast<double>(i));
  return g;
}

std::vector<std::uint64_t> read_seeds(const json& j, const std::string& path) {
  if (j.is_array()) return j.get<std::vector<std::uint64_t>>();
  Reader r(j, path);
  std::uint64_t start = 0, count = 0;
  r.get("start", start);
  r.get("count", count);
  r.finish();
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 0; i < count; ++i) s.push_back(start + i);
  return s;
}

std::vector<std::string> metric_names(const std::vector<ExpertMetric>& ms) {
  std::vector<std::string> out;
  for (auto m : ms) out.emplace_back(metric_name(m));
  return out;
}

}  // namespace

TransferAccounting parse_transfer(std::string_view name) {
  if (name == "all_placed") return TransferAccounting::kAllPlaced;
  if (name == "active_only") return TransferAccounting::kActiveOnly;
  throw ConfigError("unknown transfer accounting '" + std::string(name) + "' (all_placed, active_only)");
}

std::string_view transfer_name(TransferAccounting t) {
  return t == TransferAccounting::kAllPlaced ? "all_placed" : "active_only";
}

ExperimentConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.train = default_train_config();
  Reader r(root, "config");
  r.get("experiment", cfg.experiment);
  if (const json* s = r.child("seeds")) cfg.seeds = read_seeds(*s, "config.seeds");
  r.get("output_dir", cfg.output_dir);

  if (const json* t = r.child("task")) {
    Reader tr(*t, "config.task");
    tr.get("d", cfg.task.d);
    tr.get("vocab", cfg.task.vocab);
    tr.get("n", cfg.task.n);
    tr.get("alpha", cfg.task.alpha);
    tr.get("rotated", cfg.task.rotated);
    tr.finish();
  }
  if (const json* t = r.child("train")) {
    Reader tr(*t, "config.train");
    auto& c = cfg.train;
    tr.get("steps", c.steps);
    tr.get("batch", c.batch);
    tr.get("eta_expert", c.eta_expert);
    tr.get("eta_router", c.eta_router);
    tr.get("capacity", c.capacity);
    tr.get("experts", c.experts);
    tr.get("width", c.width);
    tr.get("signs", c.signs);
    tr.get("init_up", c.init_up);
    tr.get("init_router", c.init_router);
    tr.get("enforce_init_conditions", c.enforce_init_conditions);
    tr.get("max_init_attempts", c.max_init_attempts);
    tr.get("history_every", c.history_every);
    tr.get("monitor_size", c.monitor_size);
    tr.get("divergence_bound", c.divergence_bound);
    tr.finish();
  }
  if (const json* p = r.child("probe")) {
    Reader pr(*p, "config.probe");
    pr.get("size", cfg.probe.size);
    pr.get("threshold", cfg.probe.threshold);
    pr.finish();
  }
  if (const json* n = r.child("noise_sweep")) {
    Reader nr(*n, "config.noise_sweep");
    auto& s = cfg.theorem1.sweep;
    if (const json* g = nr.child("grid")) s.grid = read_grid(*g, "config.noise_sweep.grid");
    nr.get("threshold", s.threshold);
    nr.get("test_size", s.test_size);
    nr.get("draws", s.draws);
    nr.get("tile_size", s.tile_size);
    nr.finish();
  }
  cfg.compare.sweep = cfg.theorem1.sweep;
  if (const json* t = r.child("theorem1")) {
    Reader tr(*t, "config.theorem1");
    if (const json* g = tr.child("gamma")) {
      if (g->is_string() && g->get<std::string>() == "measured") {
        cfg.theorem1.gamma.reset();
      } else if (g->is_number()) {
        cfg.theorem1.gamma = g->get<double>();
      } else {
        tr.fail("gamma must be a number or \"measured\"");
      }
    }
    tr.finish();
  }
  if (const json* c = r.child("compare")) {
    Reader cr(*c, "config.compare");
    cr.get("gammas", cfg.compare.gammas);
    if (const json* m = cr.child("metrics")) {
      cfg.compare.metrics.clear();
      try {
        for (const auto& name : m->get<std::vector<std::string>>()) cfg.compare.metrics.push_back(parse_metric(name));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("config.compare.metrics: ") + e.what());
      }
    }
    cr.get("calibration_sequences", cfg.compare.calibration_sequences);
    cr.finish();
  }
  if (const json* n = r.child("noise_validate")) {
    Reader nr(*n, "config.noise_validate");
    if (const json* s = nr.child("noise")) read_noise(*s, cfg.noise_validate.noise, "config.noise_validate.noise");
    nr.get("points", cfg.noise_validate.points);
    nr.get("draws", cfg.noise_validate.draws);
    nr.finish();
  }
  if (const json* q = r.child("quantizer_validate")) {
    Reader qr(*q, "config.quantizer_validate");
    qr.get("bits", cfg.quantizer_validate.bits);
    qr.get("samples", cfg.quantizer_validate.samples);
    qr.get("beta", cfg.quantizer_validate.beta);
    qr.get("input_spread", cfg.quantizer_validate.input_spread);
    qr.finish();
  }
  if (const json* c = r.child("calibrate")) {
    Reader cr(*c, "config.calibrate");
    auto& k = cfg.calibrate;
    if (const json* g = cr.child("kappa_grid")) k.kappa_grid = read_grid(*g, "config.calibrate.kappa_grid");
    if (const json* g = cr.child("lambda_grid")) k.lambda_grid = read_grid(*g, "config.calibrate.lambda_grid");
    cr.get("d", k.d);
    cr.get("m", k.m);
    cr.get("experts", k.experts);
    cr.get("fanout", k.fanout);
    cr.get("calibration_tokens", k.calibration_tokens);
    cr.get("eval_tokens", k.eval_tokens);
    cr.get("token_std", k.token_std);
    cr.get("outlier_scale", k.outlier_scale);
    if (const json* q = cr.child("quantizer")) read_quantizer(*q, k.quantizer, "config.calibrate.quantizer");
    if (const json* n = cr.child("noise")) read_noise(*n, k.noise, "config.calibrate.noise");
    cr.get("tile_size", k.tile_size);
    cr.finish();
  }
  if (const json* p = r.child("perf")) {
    Reader pr(*p, "config.perf");
    auto& pc = cfg.perf;
    if (const json* m = pr.child("model")) {
      Reader mr(*m, "config.perf.model");
      mr.get("name", pc.model.name);
      mr.get("layers", pc.model.layers);
      mr.get("hidden", pc.model.hidden);
      mr.get("expert_hidden", pc.model.expert_hidden);
      mr.get("experts", pc.model.experts);
      mr.get("active_experts", pc.model.active_experts);
      mr.get("gated", pc.model.gated);
      mr.get("vocab", pc.model.vocab);
      mr.get("shared_expert_hidden", pc.model.shared_expert_hidden);
      mr.get("bytes_per_param", pc.model.bytes_per_param);
      mr.get("tile_size", pc.model.tile_size);
      mr.finish();
    }
    if (const json* d = pr.child("device")) {
      Reader dr(*d, "config.perf.device");
      if (const json* g = dr.child("digital")) {
        Reader gr(*g, "config.perf.device.digital");
        gr.get("peak_ops", pc.device.digital.peak_ops);
        gr.get("power", pc.device.digital.power);
        gr.get("bandwidth", pc.device.digital.bandwidth);
        gr.get("mfu", pc.device.digital.mfu);
        gr.finish();
      }
      if (const json* a = dr.child("analog")) {
        if (!a->is_object()) throw ConfigError("config.perf.device.analog: expected an object of op kinds");
        pc.device.analog.clear();
        for (const auto& [kind, v] : a->items()) {
          Reader ar(v, "config.perf.device.analog." + kind);
          AnalogOpCost cost;
          ar.get("latency", cost.latency);
          ar.get("energy", cost.energy);
          ar.finish();
          pc.device.analog[kind] = cost;
        }
      }
      dr.finish();
    }
    pr.get("batch", pc.batch);
    pr.get("gammas", pc.gammas);
    std::string transfer(transfer_name(pc.transfer));
    pr.get("transfer", transfer);
    pc.transfer = parse_transfer(transfer);
    pr.finish();
  }
  r.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace {

template <class Fn>
void check(const char* field, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string(field) + ": " + e.what());
  }
}

bool needs_seeds(std::string_view e) {
  return e == "lemma1" || e == "theorem1" || e == "partition-compare" || e == "noise-validate" ||
         e == "quantizer-validate" || e == "calibrate";
}

}  // namespace

void ExperimentConfig::validate() const {
  bool known = false;
  for (const auto& info : experiment_catalog()) known = known || info.name == experiment;
  if (!known) throw ConfigError("config.experiment: unknown experiment '" + experiment + "'");
  if (needs_seeds(experiment) && seeds.empty()) throw ConfigError("config.seeds: at least one seed required");
  if (output_dir.empty()) throw ConfigError("config.output_dir: must not be empty");

  if (experiment == "lemma1" || experiment == "theorem1" || experiment == "partition-compare") {
    check("config.task", [&] { task.validate(); });
    check("config.train", [&] { train.validate(); });
    if (train.capacity > task.n) throw ConfigError("config.train.capacity: exceeds sequence length n");
    if (probe.size == 0) throw ConfigError("config.probe.size: must be >= 1");
    if (!(probe.threshold > 0.0 && probe.threshold <= 1.0)) throw ConfigError("config.probe.threshold: must be in (0, 1]");
  }
  if (experiment == "theorem1" || experiment == "partition-compare") {
    check("config.noise_sweep", [&] { theorem1.sweep.validate(); });
  }
  if (experiment == "theorem1" && theorem1.gamma && (*theorem1.gamma < 0.0 || *theorem1.gamma > 1.0)) {
    throw ConfigError("config.theorem1.gamma: must be in [0, 1]");
  }
  if (experiment == "partition-compare") {
    if (compare.gammas.empty()) throw ConfigError("config.compare.gammas: empty");
    for (double g : compare.gammas)
      if (g < 0.0 || g > 1.0) throw ConfigError("config.compare.gammas: values must be in [0, 1]");
    if (compare.metrics.empty()) throw ConfigError("config.compare.metrics: empty");
    if (compare.calibration_sequences == 0) throw ConfigError("config.compare.calibration_sequences: must be >= 1");
  }
  if (experiment == "noise-validate") {
    check("config.noise_validate.noise", [&] { noise_validate.noise.validate(); });
    if (noise_validate.points.empty()) throw ConfigError("config.noise_validate.points: empty");
    if (noise_validate.draws < 2) throw ConfigError("config.noise_validate.draws: must be >= 2");
    for (const auto& [w, wmax] : noise_validate.points)
      if (!(wmax > 0.0) || std::abs(w) > wmax) throw ConfigError("config.noise_validate.points: need 0 < |w| <= w_max");
  }
  if (experiment == "quantizer-validate") {
    for (int b : quantizer_validate.bits)
      if (b < 2 || b > 52) throw ConfigError("config.quantizer_validate.bits: must be in [2, 52]");
    if (quantizer_validate.bits.empty() || quantizer_validate.samples == 0) {
      throw ConfigError("config.quantizer_validate: bits and samples must be nonempty");
    }
    if (!(quantizer_validate.beta > 0.0) || !(quantizer_validate.input_spread > 0.0)) {
      throw ConfigError("config.quantizer_validate: beta and input_spread must be positive");
    }
  }
  if (experiment == "calibrate") {
    const auto& c = calibrate;
    if (c.kappa_grid.empty() || c.lambda_grid.empty()) throw ConfigError("config.calibrate: empty grid");
    for (double v : c.kappa_grid)
      if (!(v > 0.0)) throw ConfigError("config.calibrate.kappa_grid: values must be positive");
    for (double v : c.lambda_grid)
      if (!(v > 0.0)) throw ConfigError("config.calibrate.lambda_grid: values must be positive");
    if (c.d == 0 || c.m == 0 || c.experts == 0 || c.fanout == 0 || c.fanout > c.experts) {
      throw ConfigError("config.calibrate: sizes must be positive and fanout <= experts");
    }
    if (c.calibration_tokens == 0 || c.eval_tokens == 0 || c.tile_size == 0) {
      throw ConfigError("config.calibrate: token counts and tile size must be >= 1");
    }
    check("config.calibrate.quantizer", [&] { c.quantizer.validate(); });
    check("config.calibrate.noise", [&] { c.noise.validate(); });
  }
  if (experiment == "perf-table") {
    check("config.perf.model", [&] { perf.model.validate(); });
    check("config.perf.device", [&] { perf.device.validate(); });
    if (perf.batch == 0) throw ConfigError("config.perf.batch: must be >= 1");
    for (double g : perf.gammas)
      if (g < 0.0 || g > 1.0) throw ConfigError("config.perf.gammas: values must be in [0, 1]");
  }
}

std::string config_to_json(const ExperimentConfig& cfg) {
  const auto& t = cfg.train;
  json analog = json::object();
  for (const auto& [kind, cost] : cfg.perf.device.analog) analog[kind] = {{"latency", cost.latency}, {"energy", cost.energy}};
  const auto& m = cfg.perf.model;
  const auto& s = cfg.theorem1.sweep;
  const auto& k = cfg.calibrate;
  json j = {
      {"experiment", cfg.experiment},
      {"seeds", cfg.seeds},
      {"output_dir", cfg.output_dir},
      {"task",
       {{"d", cfg.task.d}, {"vocab", cfg.task.vocab}, {"n", cfg.task.n}, {"alpha", cfg.task.alpha},
        {"rotated", cfg.task.rotated}}},
      {"train",
       {{"steps", t.steps}, {"batch", t.batch}, {"eta_expert", t.eta_expert}, {"eta_router", t.eta_router},
        {"capacity", t.capacity}, {"experts", t.experts}, {"width", t.width}, {"signs", t.resolved_signs()},
        {"init_up", t.init_up}, {"init_router", t.init_router}, {"enforce_init_conditions", t.enforce_init_conditions},
        {"max_init_attempts", t.max_init_attempts}, {"history_every", t.history_every},
        {"monitor_size", t.monitor_size}, {"divergence_bound", t.divergence_bound}}},
      {"probe", {{"size", cfg.probe.size}, {"threshold", cfg.probe.threshold}}},
      {"noise_sweep",
       {{"grid", grid_json(s.grid)}, {"threshold", s.threshold}, {"test_size", s.test_size}, {"draws", s.draws},
        {"tile_size", s.tile_size}}},
      {"theorem1", {{"gamma", cfg.theorem1.gamma ? json(*cfg.theorem1.gamma) : json("measured")}}},
      {"compare",
       {{"gammas", cfg.compare.gammas}, {"metrics", metric_names(cfg.compare.metrics)},
        {"calibration_sequences", cfg.compare.calibration_sequences}}},
      {"noise_validate",
       {{"noise", noise_json(cfg.noise_validate.noise)}, {"points", cfg.noise_validate.points},
        {"draws", cfg.noise_validate.draws}}},
      {"quantizer_validate",
       {{"bits", cfg.quantizer_validate.bits}, {"samples", cfg.quantizer_validate.samples},
        {"beta", cfg.quantizer_validate.beta}, {"input_spread", cfg.quantizer_validate.input_spread}}},
      {"calibrate",
       {{"kappa_grid", k.kappa_grid}, {"lambda_grid", k.lambda_grid}, {"d", k.d}, {"m", k.m}, {"experts", k.experts},
        {"fanout", k.fanout}, {"calibration_tokens", k.calibration_tokens}, {"eval_tokens", k.eval_tokens},
        {"token_std", k.token_std}, {"outlier_scale", k.outlier_scale}, {"quantizer", quantizer_json(k.quantizer)},
        {"noise", noise_json(k.noise)}, {"tile_size", k.tile_size}}},
      {"perf",
       {{"model",
         {{"name", m.name}, {"layers", m.layers}, {"hidden", m.hidden}, {"expert_hidden", m.expert_hidden},
          {"experts", m.experts}, {"active_experts", m.active_experts}, {"gated", m.gated}, {"vocab", m.vocab},
          {"shared_expert_hidden", m.shared_expert_hidden}, {"bytes_per_param", m.bytes_per_param},
          {"tile_size", m.tile_size}}},
        {"device",
         {{"digital",
           {{"peak_ops", cfg.perf.device.digital.peak_ops}, {"power", cfg.perf.device.digital.power},
            {"bandwidth", cfg.perf.device.digital.bandwidth}, {"mfu", cfg.perf.device.digital.mfu}}},
          {"analog", analog}}},
        {"batch", cfg.perf.batch},
        {"gammas", cfg.perf.gammas},
        {"transfer", transfer_name(cfg.perf.transfer)}}},
  };
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : config_to_json(cfg)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hetmoe
