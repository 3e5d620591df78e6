// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetmoe/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hetmoe/kernels.hpp"
#include "hetmoe/moe.hpp"
#include "json.hpp"

#ifndef HETMOE_GIT_REV
#define HETMOE_GIT_REV "unknown"
#endif

namespace hetmoe {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : ""; }

std::string join(const std::vector<std::size_t>& v, char sep = ' ') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

class Output {
 public:
  explicit Output(std::string dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_ + "': " + ec.message());
  }

  void write(const std::string& name, const std::string& content) {
    const auto path = fs::path(dir_) / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    out.close();
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    files_.push_back(name);
  }

  const std::vector<std::string>& files() const { return files_; }
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::vector<std::string> files_;
};

// noise-validate: w,w_max,branch,sigma_model,sigma_mc,rel_error
void run_noise_validate(const ExperimentConfig& cfg, Output& out) {
  const auto& nv = cfg.noise_validate;
  std::ostringstream csv;
  csv << "seed,w,w_max,branch,sigma_model,sigma_mc,rel_error\n";
  json rows = json::array();
  double worst = 0.0;
  for (auto seed : cfg.seeds) {
    for (std::size_t i = 0; i < nv.points.size(); ++i) {
      const auto [w, wmax] = nv.points[i];
      const double model = programming_sigma(w, wmax, nv.noise);
      Matrix col(nv.draws, 1, w);
      const std::vector<double> cmax{wmax};
      const auto programmed = program_weights(col, cmax, nv.noise, RngStream(seed, 0).split(i));
      double mean = 0.0;
      for (double v : programmed.data()) mean += v - w;
      mean /= static_cast<double>(nv.draws);
      double ss = 0.0;
      for (double v : programmed.data()) ss += (v - w - mean) * (v - w - mean);
      const double mc = std::sqrt(ss / static_cast<double>(nv.draws - 1));
      const double rel = model > 0.0 ? std::abs(mc - model) / model : std::abs(mc);
      worst = std::max(worst, rel);
      const char* branch = nv.noise.mode == NoiseSpec::Mode::kSimplified ? "simplified"
                           : std::abs(w) > nv.noise.threshold * wmax   ? "high"
                                                                         : "low";
      csv << seed << ',' << num(w) << ',' << num(wmax) << ',' << branch << ',' << num(model) << ',' << num(mc) << ','
          << num(rel) << '\n';
    }
  }
  out.write("noise_validate.csv", csv.str());
  out.write("noise_validate_summary.json", json{{"max_rel_error", worst}, {"draws", nv.draws}}.dump(2) + "\n");
}

struct QuantStats {
  double max_err_lsb = 0.0;  // in-range |q − x| / LSB
  std::size_t idempotence = 0, monotonicity = 0, saturation = 0;
};

template <class Q>
QuantStats quant_stats(const std::vector<double>& xs, double beta, int bits, Q q) {
  QuantStats s;
  const double lsb = beta / quant_levels(bits);
  std::vector<std::pair<double, double>> pairs;
  for (double x : xs) {
    const double y = q(x);
    if (std::abs(x) <= beta) s.max_err_lsb = std::max(s.max_err_lsb, std::abs(y - x) / lsb);
    if (q(y) != y) ++s.idempotence;
    if (std::abs(x) >= beta && y != std::copysign(beta, x)) ++s.saturation;
    pairs.emplace_back(x, y);
  }
  std::sort(pairs.begin(), pairs.end());
  for (std::size_t i = 1; i < pairs.size(); ++i)
    if (pairs[i].second < pairs[i - 1].second) ++s.monotonicity;
  return s;
}

// quantizer-validate: one row per (seed, converter, bits).
void run_quantizer_validate(const ExperimentConfig& cfg, Output& out) {
  const auto& qv = cfg.quantizer_validate;
  std::ostringstream csv;
  csv << "seed,converter,bits,samples,max_error_over_lsb,idempotence_violations,monotonicity_violations,"
         "saturation_violations,pass\n";
  bool all = true;
  for (auto seed : cfg.seeds) {
    for (int bits : qv.bits) {
      RngStream rng = RngStream(seed, 0).split(static_cast<std::uint64_t>(bits));
      std::vector<double> xs(qv.samples);
      for (double& x : xs) x = (2.0 * rng.uniform() - 1.0) * qv.input_spread * qv.beta;
      for (int conv = 0; conv < 2; ++conv) {
        const auto s = conv == 0
                           ? quant_stats(xs, qv.beta, bits, [&](double x) { return dac_quantize(x, qv.beta, bits); })
                           : quant_stats(xs, qv.beta, bits, [&](double x) { return adc_quantize(x, qv.beta, bits); });
        const bool pass = s.max_err_lsb <= 0.5 + 1e-9 && s.idempotence == 0 && s.monotonicity == 0 && s.saturation == 0;
        all = all && pass;
        csv << seed << ',' << (conv == 0 ? "dac" : "adc") << ',' << bits << ',' << qv.samples << ','
            << num(s.max_err_lsb) << ',' << s.idempotence << ',' << s.monotonicity << ',' << s.saturation << ','
            << (pass ? 1 : 0) << '\n';
      }
    }
  }
  out.write("quantizer_validate.csv", csv.str());
  out.write("quantizer_validate_summary.json", json{{"all_pass", all}}.dump(2) + "\n");
}

void run_lemma1(const ExperimentConfig& cfg, Output& out) {
  const auto rep = run_lemma1_experiment(cfg.task, cfg.train, cfg.probe, cfg.seeds);
  std::ostringstream seeds;
  seeds << "seed,pair_found,ordering_holds,min_score_ratio,rare_o1,frequent_o1,rare_o2,frequent_o2,loss_initial,"
           "loss_final,router_attempts,init_conditions_met\n";
  std::ostringstream scores;
  scores << "seed,expert,sign,max_nn_score,role\n";
  for (const auto& r : rep.seeds) {
    const auto& sp = r.specialists;
    seeds << r.seed << ',' << r.pair_found << ',' << r.ordering_holds << ',' << (r.pair_found ? num(r.min_ratio) : "")
          << ',' << join(sp.rare[0]) << ',' << join(sp.frequent[0]) << ',' << join(sp.rare[1]) << ','
          << join(sp.frequent[1]) << ',' << num(r.loss_initial) << ',' << num(r.loss_final) << ','
          << r.router_attempts << ',' << r.init_conditions_met << '\n';
    const auto signs = cfg.train.resolved_signs();
    for (std::size_t s = 0; s < r.scores.size(); ++s) {
      std::string role;
      auto tag = [&](const std::vector<std::size_t>& v, const char* name) {
        if (std::find(v.begin(), v.end(), s) != v.end()) role += role.empty() ? name : std::string("|") + name;
      };
      tag(sp.rare[0], "+o1");
      tag(sp.frequent[0], "-o1");
      tag(sp.rare[1], "+o2");
      tag(sp.frequent[1], "-o2");
      scores << r.seed << ',' << s << ',' << signs[s] << ',' << num(r.scores[s]) << ',' << role << '\n';
    }
  }
  out.write("lemma1_seeds.csv", seeds.str());
  out.write("lemma1_scores.csv", scores.str());
  const json summary{{"seeds", rep.seeds.size()},
                     {"seeds_with_pair", rep.with_pair},
                     {"seeds_ordering_holds", rep.holding},
                     {"fraction_holding", rep.fraction_holding},
                     {"median_min_score_ratio", finite_or_null(rep.median_ratio)},
                     {"fraction_loss_halved", rep.fraction_loss_halved},
                     {"inconclusive", rep.inconclusive()}};
  out.write("lemma1_summary.json", summary.dump(2) + "\n");
}

void run_theorem1(const ExperimentConfig& cfg, Output& out) {
  const auto rep = run_theorem1_experiment(cfg.task, cfg.train, cfg.probe, cfg.theorem1, cfg.seeds);
  std::ostringstream curves;
  curves << "seed,c,acc_analog,acc_hetero\n";
  std::ostringstream seeds;
  seeds << "seed,gamma_measured,gamma_used,gamma_below_measured,digital_experts,clean_accuracy,c_analog,c_hetero,"
           "ratio,ratio_censored,training_failure\n";
  for (const auto& r : rep.seeds) {
    for (std::size_t i = 0; i < rep.grid.size(); ++i)
      curves << r.seed << ',' << num(rep.grid[i]) << ',' << num(r.acc_analog[i]) << ',' << num(r.acc_hetero[i]) << '\n';
    seeds << r.seed << ',' << num(r.gamma_measured) << ',' << num(r.gamma_used) << ',' << r.gamma_below_measured << ','
          << join({r.digital.begin(), r.digital.end()}) << ',' << num(r.clean_accuracy) << ',' << opt_num(r.c_analog)
          << ',' << opt_num(r.c_hetero) << ',' << (r.training_failure ? "" : num(r.ratio)) << ','
          << r.ratio_censored << ',' << r.training_failure << '\n';
  }
  std::ostringstream mean;
  mean << "c,mean_acc_analog,se_analog,mean_acc_hetero,se_hetero,valid_seeds\n";
  for (std::size_t i = 0; i < rep.mean_analog.size(); ++i)
    mean << num(rep.grid[i]) << ',' << num(rep.mean_analog[i]) << ',' << num(rep.se_analog[i]) << ','
         << num(rep.mean_hetero[i]) << ',' << num(rep.se_hetero[i]) << ',' << rep.valid_seeds << '\n';
  out.write("theorem1_curves.csv", curves.str());
  out.write("theorem1_seeds.csv", seeds.str());
  out.write("theorem1_mean_curves.csv", mean.str());
  std::size_t below = 0;
  for (const auto& r : rep.seeds) below += r.gamma_below_measured;
  const json summary{{"seeds", rep.seeds.size()},
                     {"valid_seeds", rep.valid_seeds},
                     {"mean_ratio", rep.mean_ratio},
                     {"monotone_analog", rep.monotone_analog},
                     {"monotone_hetero", rep.monotone_hetero},
                     {"seeds_gamma_below_measured", below},
                     {"threshold", cfg.theorem1.sweep.threshold}};
  out.write("theorem1_summary.json", summary.dump(2) + "\n");
  if (below > 0) {
    std::fprintf(stderr, "warning: configured gamma is below the measured gamma for %zu seed(s)\n", below);
  }
}

void run_compare(const ExperimentConfig& cfg, Output& out) {
  const auto rep = compare_partitions(cfg.task, cfg.train, cfg.probe, cfg.compare, cfg.seeds);
  std::ostringstream curves;
  curves << "metric,gamma,c,mean_accuracy,std_error,valid_seeds\n";
  std::ostringstream summary;
  summary << "metric,gamma,grid_mean_accuracy,grid_mean_std_error,valid_seeds\n";
  std::ostringstream per_seed;
  per_seed << "seed,metric,gamma,grid_mean_accuracy\n";
  for (const auto& c : rep.curves) {
    const auto name = metric_name(c.metric);
    for (std::size_t i = 0; i < c.mean.size(); ++i)
      curves << name << ',' << num(c.gamma) << ',' << num(rep.grid[i]) << ',' << num(c.mean[i]) << ',' << num(c.se[i])
             << ',' << c.per_seed.size() << '\n';
    summary << name << ',' << num(c.gamma) << ',' << num(c.grid_mean) << ',' << num(c.grid_mean_se) << ','
            << c.per_seed.size() << '\n';
    for (std::size_t i = 0; i < c.grid_means.size(); ++i)
      per_seed << rep.valid_seeds[i] << ',' << name << ',' << num(c.gamma) << ',' << num(c.grid_means[i]) << '\n';
  }
  out.write("compare_curves.csv", curves.str());
  out.write("compare_summary.csv", summary.str());
  out.write("compare_seeds.csv", per_seed.str());
}

void run_perf(const ExperimentConfig& cfg, Output& out) {
  const auto& p = cfg.perf;
  const auto rows = perf_table(p.model, p.device, p.batch, p.gammas, p.transfer);
  std::ostringstream csv;
  write_perf_csv(csv, rows);
  out.write("perf_table.csv", csv.str());
}

// Relative Frobenius error of an all-analog toy block against digital, mean
// over seeds; programming noise is shared across grid points.
void run_calibrate(const ExperimentConfig& cfg, Output& out) {
  const auto& c = cfg.calibrate;
  struct Instance {
    MoEBlock block;
    Matrix calib, eval, reference;
    RngStream program_rng{0, 0};
  };
  std::vector<Instance> instances;
  for (auto seed : cfg.seeds) {
    RngStream rng = RngStream(seed, 0).split(1);
    Instance in;
    in.block.routing = RoutingMode::kTokenChoice;
    in.block.activation = Activation::kSilu;
    in.block.fanout = c.fanout;
    in.block.router = gaussian(rng, 0.0, 1.0 / std::sqrt(static_cast<double>(c.d)), c.d, c.experts);
    for (std::size_t s = 0; s < c.experts; ++s) {
      ExpertWeights e;
      e.up = gaussian(rng, 0.0, 1.0 / std::sqrt(static_cast<double>(c.d)), c.d, c.m);
      e.down = gaussian(rng, 0.0, 1.0 / std::sqrt(static_cast<double>(c.m)), c.m, c.d);
      in.block.experts.push_back(std::move(e));
    }
    auto tokens = [&](std::size_t n) {
      Matrix x = gaussian(rng, 0.0, c.token_std, n, c.d);
      for (double& v : x.data())
        if (rng.uniform_index(64) == 0) v *= c.outlier_scale;
      return x;
    };
    in.calib = tokens(c.calibration_tokens);
    in.eval = tokens(c.eval_tokens);
    in.reference = block_forward(in.block, in.eval, BackendAssignment::all(c.experts, Backend::kDigital));
    in.program_rng = RngStream(seed, 0).split(2);
    instances.push_back(std::move(in));
  }
  std::ostringstream grid;
  grid << "stage,kappa,lambda,relative_error\n";
  auto evaluate = [&](double kappa, double lambda) {
    double total = 0.0;
    for (const auto& in : instances) {
      AnalogOptions opts;
      opts.tile_size = c.tile_size;
      opts.quantizer = c.quantizer;
      opts.quantizer.kappa = kappa;
      opts.quantizer.lambda = lambda;
      const auto assign = BackendAssignment::all(c.experts, Backend::kAnalog);
      AnalogContext ctx(in.block, assign, opts, c.noise, in.program_rng);
      ctx.calibrate(in.block, in.calib);
      const auto y = block_forward(in.block, in.eval, assign, &ctx);
      total += relative_error(y, in.reference);
    }
    return total / static_cast<double>(instances.size());
  };
  for (double k : c.kappa_grid) grid << "kappa," << num(k) << ",1," << num(evaluate(k, 1.0)) << '\n';
  const auto [kappa, lambda] = grid_calibrate(evaluate, c.kappa_grid, c.lambda_grid);
  for (double l : c.lambda_grid) grid << "lambda," << num(kappa) << ',' << num(l) << ',' << num(evaluate(kappa, l)) << '\n';
  out.write("calibrate_grid.csv", grid.str());
  const json best{{"kappa", kappa}, {"lambda", lambda}, {"relative_error", evaluate(kappa, lambda)}};
  out.write("calibrate_best.json", best.dump(2) + "\n");
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string resolve_output_dir(const ExperimentConfig& cfg) {
  const char* env = std::getenv(kOutputDirEnv);
  return env && *env ? std::string(env) : cfg.output_dir;
}

RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& output_dir) {
  cfg.validate();
  Output out(output_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const auto started = utc_timestamp();
  const auto& e = cfg.experiment;
  if (e == "noise-validate") {
    run_noise_validate(cfg, out);
  } else if (e == "quantizer-validate") {
    run_quantizer_validate(cfg, out);
  } else if (e == "lemma1") {
    run_lemma1(cfg, out);
  } else if (e == "theorem1") {
    run_theorem1(cfg, out);
  } else if (e == "partition-compare") {
    run_compare(cfg, out);
  } else if (e == "perf-table") {
    run_perf(cfg, out);
  } else if (e == "calibrate") {
    run_calibrate(cfg, out);
  }
  out.write("config.json", config_to_json(cfg) + "\n");
  RunSummary summary;
  summary.experiment = e;
  summary.output_dir = output_dir;
  summary.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  summary.files = out.files();
  const json manifest{{"experiment", e},
                      {"config_hash", config_hash(cfg)},
                      {"seeds", cfg.seeds},
                      {"git_revision", HETMOE_GIT_REV},
                      {"started_utc", started},
                      {"wall_time_s", summary.wall_time_s},
                      {"files", summary.files}};
  out.write("manifest.json", manifest.dump(2) + "\n");
  summary.files = out.files();
  return summary;
}

std::string error_report(int code, const std::string& kind, const std::string& message) {
  return json{{"status", "error"}, {"exit_code", code}, {"kind", kind}, {"message", message}}.dump();
}

}  // namespace hetmoe
