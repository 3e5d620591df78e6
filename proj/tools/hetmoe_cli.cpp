// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: run, validate and list-experiments.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hetmoe/config.hpp"
#include "hetmoe/errors.hpp"
#include "hetmoe/runner.hpp"
#include "json.hpp"

using namespace hetmoe;

namespace {

int fail(int code, const std::string& kind, const std::string& message) {
  std::cerr << error_report(code, kind, message) << '\n';
  return code;
}

// Maps exceptions escaping a subcommand to exit codes.
template <class F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const IoError& e) {
    return fail(kExitIo, "io", e.what());
  } catch (const DivergenceError& e) {
    return fail(kExitExperiment, "divergence", e.what());
  } catch (const std::exception& e) {
    return fail(kExitExperiment, "experiment", e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heterogeneous analog/digital MoE experiments"};
  app.require_subcommand(1);

  std::string run_path;
  std::string output_override;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "run the experiment described by a JSON config");
  run->add_option("config", run_path, "config file")->required();
  run->add_option("-o,--output-dir", output_override,
                  std::string("output directory (overrides ") + kOutputDirEnv + " and the config)");
  run->add_flag("-q,--quiet", quiet, "do not print the run summary");

  std::string validate_path;
  bool print_effective = false;
  auto* validate = app.add_subcommand("validate", "parse and check a config without running it");
  validate->add_option("config", validate_path, "config file")->required();
  validate->add_flag("--print", print_effective, "print the effective config with defaults filled in");

  auto* list = app.add_subcommand("list-experiments", "list experiment names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitUsage, "usage", e.what());
  }

  if (list->parsed()) {
    for (const auto& info : experiment_catalog())
      std::printf("%-20s %.*s\n", std::string(info.name).c_str(), static_cast<int>(info.summary.size()),
                  info.summary.data());
    return kExitOk;
  }

  if (validate->parsed()) {
    return guarded([&] {
      const auto cfg = load_config(validate_path);
      cfg.validate();
      if (print_effective) {
        std::cout << config_to_json(cfg) << '\n';
      } else {
        const nlohmann::json ok{{"status", "ok"},
                                {"experiment", cfg.experiment},
                                {"config_hash", config_hash(cfg)},
                                {"output_dir", resolve_output_dir(cfg)}};
        std::cout << ok.dump() << '\n';
      }
      return static_cast<int>(kExitOk);
    });
  }

  return guarded([&] {
    const auto cfg = load_config(run_path);
    cfg.validate();
    const auto dir = output_override.empty() ? resolve_output_dir(cfg) : output_override;
    const auto summary = run_experiment(cfg, dir);
    if (!quiet) {
      const nlohmann::json ok{{"status", "ok"},
                              {"experiment", summary.experiment},
                              {"output_dir", summary.output_dir},
                              {"files", summary.files},
                              {"wall_time_s", summary.wall_time_s}};
      std::cout << ok.dump() << '\n';
    }
    return static_cast<int>(kExitOk);
  });
}
