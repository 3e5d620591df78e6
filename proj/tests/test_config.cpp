// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "hetmoe/config.hpp"
#include "hetmoe/runner.hpp"

using namespace hetmoe;

namespace {

std::string message_of(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("defaults are filled in") {
  const auto cfg = parse_config(R"({"experiment": "lemma1", "seeds": {"start": 3, "count": 2}})");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(cfg.task.d == 64);
  CHECK(cfg.train.steps == default_train_config().steps);
  CHECK(cfg.theorem1.sweep.grid.size() == 41);
  CHECK_FALSE(cfg.theorem1.gamma.has_value());
  CHECK(cfg.compare.sweep.grid == cfg.theorem1.sweep.grid);
}

TEST_CASE("bad configs name the offending field") {
  CHECK(message_of(R"({"experiment": "lemma1", "seeds": [0], "task": {"alpha": 0.3}})").find("outside the domain (0, 1/4)") !=
        std::string::npos);
  CHECK(message_of(R"({"experiment": "lemma1", "seeds": [0], "tsak": {}})").find("tsak") != std::string::npos);
  CHECK(message_of(R"({"experiment": "nope"})").find("unknown experiment") != std::string::npos);
  CHECK(message_of(R"({"experiment": "lemma1"})").find("seeds") != std::string::npos);
  CHECK(message_of(R"({"experiment": "perf-table", "perf": {"transfer": "some"}})").find("transfer") !=
        std::string::npos);
  CHECK(message_of("{not json").find("parse") != std::string::npos);
  CHECK(message_of(R"({"experiment": "theorem1", "seeds": [0], "noise_sweep": {"grid": [0, 0.1, 0.05]}})")
            .find("noise_sweep") != std::string::npos);
}

TEST_CASE("canonical json round trips and hashes stably") {
  const auto cfg = parse_config(R"({"experiment": "theorem1", "seeds": [1, 2], "theorem1": {"gamma": 0.25},
                                    "noise_sweep": {"grid": {"start": 0, "stop": 0.1, "step": 0.05}}})");
  CHECK(cfg.theorem1.gamma == 0.25);
  CHECK(cfg.theorem1.sweep.grid.size() == 3);
  const auto again = parse_config(config_to_json(cfg));
  CHECK(config_to_json(again) == config_to_json(cfg));
  CHECK(config_hash(again) == config_hash(cfg));
  auto other = cfg;
  other.seeds.push_back(3);
  CHECK(config_hash(other) != config_hash(cfg));
}

TEST_CASE("output dir override from the environment") {
  auto cfg = parse_config(R"({"experiment": "perf-table", "output_dir": "from_config"})");
  unsetenv(kOutputDirEnv);
  CHECK(resolve_output_dir(cfg) == "from_config");
  setenv(kOutputDirEnv, "from_env", 1);
  CHECK(resolve_output_dir(cfg) == "from_env");
  unsetenv(kOutputDirEnv);
}

TEST_CASE("cheap recipes write byte-identical results on rerun") {
  const auto base = std::filesystem::temp_directory_path() / "hetmoe_test_rerun";
  std::filesystem::remove_all(base);
  for (const char* text : {R"({"experiment": "perf-table"})",
                           R"({"experiment": "quantizer-validate", "seeds": [0, 1],
                               "quantizer_validate": {"samples": 500}})",
                           R"({"experiment": "noise-validate", "seeds": [0],
                               "noise_validate": {"draws": 2000}})",
                           R"({"experiment": "calibrate", "seeds": [0],
                               "calibrate": {"kappa_grid": [20, 35], "lambda_grid": [0.5, 1.0],
                                             "calibration_tokens": 16, "eval_tokens": 16, "d": 8, "m": 4}})"}) {
    const auto cfg = parse_config(text);
    const auto a = run_experiment(cfg, (base / "a").string());
    const auto b = run_experiment(cfg, (base / "b").string());
    CHECK(a.files == b.files);
    for (const auto& f : a.files) {
      if (f == "manifest.json") continue;
      CHECK_MESSAGE(slurp(base / "a" / f) == slurp(base / "b" / f), f);
    }
    std::filesystem::remove_all(base);
  }
}

TEST_CASE("quantizer-validate reports all properties passing") {
  const auto base = std::filesystem::temp_directory_path() / "hetmoe_test_qv";
  const auto cfg = parse_config(R"({"experiment": "quantizer-validate", "seeds": [0]})");
  run_experiment(cfg, base.string());
  CHECK(slurp(base / "quantizer_validate_summary.json").find("\"all_pass\": true") != std::string::npos);
  std::filesystem::remove_all(base);
}
