// Copyright 2026 The hetmoe Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include "doctest.h"
#include "hetmoe/errors.hpp"
#include "hetmoe/perfmodel.hpp"

using namespace hetmoe;

TEST_CASE("energy efficiency is throughput over power") {
  DigitalProfile p;
  CHECK(digital_energy_eff(4220.07, p) == 4220.07 / 400.0);
  CHECK(std::round(digital_energy_eff(4220.07, p) * 100) / 100 == 10.55);
}

TEST_CASE("digital roofline picks the slower of compute and transfer") {
  DigitalProfile p;
  p.peak_ops = 1e12;
  p.mfu = 0.5;
  p.bandwidth = 1e9;
  WorkloadSpec w;
  w.tokens = 10;
  w.digital_ops = 1e12;  // 2 s of compute
  w.digital_bytes = 3e9;  // 3 s of transfer
  CHECK(digital_latency(w, p) == 3.0);
  CHECK(digital_throughput(w, p) == doctest::Approx(10.0 / 3.0));
  w.digital_bytes = 1e9;
  CHECK(digital_latency(w, p) == 2.0);
}

TEST_CASE("hand traces of the three estimators") {
  DeviceProfile dev;
  dev.digital.peak_ops = 1e12;
  dev.digital.bandwidth = 1e9;
  dev.digital.power = 100;
  dev.analog["tile_mvm"] = {1e-6, 2e-6};
  dev.analog["adc"] = {1e-7, 1e-8};

  // Analog only: latency Σ n·t, energy Σ n·e.
  WorkloadSpec a;
  a.tokens = 4;
  a.analog_ops = {{"tile_mvm", 1000}, {"adc", 500}};
  const auto ea = estimate(a, dev);
  CHECK(ea.latency == doctest::Approx(1000 * 1e-6 + 500 * 1e-7));
  CHECK(ea.energy == doctest::Approx(1000 * 2e-6 + 500 * 1e-8));
  CHECK(ea.throughput == doctest::Approx(4 / 1.05e-3));
  CHECK(ea.efficiency == doctest::Approx(4 / 2.005e-3));

  // Heterogeneous, digital-bound: latency = digital, energy = P·latency + analog.
  WorkloadSpec h1 = a;
  h1.digital_ops = 5e9;  // 5 ms
  const auto e1 = estimate(h1, dev);
  CHECK(e1.latency == doctest::Approx(5e-3));
  CHECK(e1.energy == doctest::Approx(100 * 5e-3 + 2.005e-3));
  CHECK(e1.throughput == doctest::Approx(800));

  // Heterogeneous, analog-bound with transfer as the digital term.
  WorkloadSpec h2 = a;
  h2.digital_bytes = 1e5;  // 0.1 ms
  const auto e2 = estimate(h2, dev);
  CHECK(e2.latency == doctest::Approx(1.05e-3));
  CHECK(e2.energy == doctest::Approx(100 * 1.05e-3 + 2.005e-3));

  WorkloadSpec missing = a;
  missing.analog_ops["dac"] = 1;
  CHECK_THROWS_AS(estimate(missing, dev), ConfigError);
}

TEST_CASE("OLMoE-style accounting") {
  MoEModelSpec m;
  CHECK(m.expert_params() == 3.0 * 2048 * 1024);
  CHECK(m.attention_params() == 16.0 * 4 * 2048 * 2048);
  CHECK(m.router_params() == 16.0 * 2048 * 64);
  CHECK(m.head_params() == 50304.0 * 2048);
  // Digital-parameter column of the reference table: 5.37, 17.01, 28.65 %.
  auto pct = [&](double g) {
    return std::round(1e4 * digital_param_fraction(m, {g, true, TransferAccounting::kAllPlaced})) / 100;
  };
  CHECK(pct(0.0) == 5.37);
  CHECK(pct(0.125) == 17.01);
  CHECK(pct(0.25) == 28.65);
  CHECK(digital_param_fraction(m, {0.0, false, TransferAccounting::kAllPlaced}) == 0.0);
  CHECK(digital_param_fraction(m, {1.0, true, TransferAccounting::kAllPlaced, true}) == doctest::Approx(1.0));

  const auto w = build_workload(m, {1.0, true, TransferAccounting::kAllPlaced}, 32);
  CHECK_FALSE(w.has_analog());
  const double tput = digital_throughput(w, DigitalProfile{});
  CHECK(std::abs(tput - 4220.07) / 4220.07 < 0.2);

  // Active-only transfer never reads more than all-placed.
  const auto all = build_workload(m, {0.25, true, TransferAccounting::kAllPlaced}, 4);
  const auto act = build_workload(m, {0.25, true, TransferAccounting::kActiveOnly}, 4);
  CHECK(act.digital_bytes < all.digital_bytes);
  CHECK(act.digital_ops == all.digital_ops);
  // One token through one gated expert: 2 up tiles (4×2) + 1 down tile (2×4).
  CHECK(m.expert_tile_mvms() == 24.0);
}

TEST_CASE("perf table rows and csv") {
  const auto rows = perf_table(MoEModelSpec{}, DeviceProfile::defaults(), 32, {0.125}, TransferAccounting::kAllPlaced);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].label == "digital");
  CHECK(rows[1].label == "analog");
  CHECK(rows[1].digital_fraction == 0.0);
  CHECK(rows[3].modules == "dense+12.5% experts");
  std::ostringstream os;
  write_perf_csv(os, rows);
  CHECK(os.str().rfind("label,param_in_digital_pct", 0) == 0);
}
