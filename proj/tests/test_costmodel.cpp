#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "hnlpu/costmodel.hpp"

using namespace hnlpu;

namespace {

// Deployment scenarios matching the published cost study.
CostScenario hnlpu_scenario() {
  CostScenario s;
  s.name = "hnlpu";
  s.relative_throughput = 4.44;
  s.it_power_mw = 0.0552;  // eight 16-chip systems in one rack
  s.pue = 1.4;
  s.electricity_usd_per_kwh = 0.095;
  NreParams nre;
  s.chips_capex_musd = model_nre_musd(nre, 16);
  s.respin_cost_musd = respin_cost_musd(nre, 16);
  s.server_networking_musd = 2.0;
  s.datacenter_infra_musd = 0.04;
  s.updates_over_lifetime = 2;
  s.carbon.grid_kgco2e_per_kwh = 0.37;
  s.carbon.embodied_kg_per_mm2 = 0.18;
  s.carbon.embodied_fixed_kg = 26000.0;
  s.carbon.respin_embodied_kg = 7000.0;
  s.carbon.silicon_area_mm2 = 13233.28;
  return s;
}

CostScenario h100_scenario() {
  CostScenario s;
  s.name = "h100-cluster";
  s.relative_throughput = 1.0;
  s.it_power_mw = 13.0;  // 10k GPUs x 1.3 kW
  s.pue = 1.4;
  s.electricity_usd_per_kwh = 0.095;
  s.chips_capex_musd = 300.0;
  s.server_networking_musd = 150.0;
  s.datacenter_infra_musd = 35.0;
  s.respin_cost_musd = 0.0;
  s.updates_over_lifetime = 0;
  s.carbon.grid_kgco2e_per_kwh = 0.37;
  s.carbon.embodied_kg_per_mm2 = 0.18;
  s.carbon.embodied_fixed_kg = 3886000.0;
  s.carbon.respin_embodied_kg = 0.0;
  s.carbon.silicon_area_mm2 = 10000.0 * 814.0;
  return s;
}

}  // namespace

TEST_SUITE("costmodel") {

TEST_CASE("chip budget component sums match the stated totals") {
  ChipBudget b = default_chip_budget();
  CHECK(b.total_area_mm2() == doctest::Approx(827.08).epsilon(1e-9));
  CHECK(b.total_power_w() == doctest::Approx(308.39).epsilon(1e-9));
  CHECK_NOTHROW(b.validate(827.08, 308.39));
  CHECK_THROWS_AS(b.validate(827.08, 300.0), std::invalid_argument);
}

TEST_CASE("system rollup: 16 chips and the 1.4 overhead factor") {
  ChipBudget b = default_chip_budget();
  auto sys = system_rollup(b, 16, 1.4);
  CHECK(std::abs(sys.area_mm2 - 13232.0) <= 2.0);
  CHECK(sys.power_w == doctest::Approx(6907.9).epsilon(1e-3));
  CHECK(sys.power_w / 1000.0 == doctest::Approx(6.9).epsilon(0.002));

  auto identity = system_rollup(b, 1, 1.0);
  CHECK(identity.area_mm2 == doctest::Approx(b.total_area_mm2()));
  CHECK(identity.power_w == doctest::Approx(b.total_power_w()));
}

TEST_CASE("photomask economics: heterogeneous, initial, re-spin") {
  LithoParams p;
  CHECK(p.full_set_cost_musd() == doctest::Approx(30.0).epsilon(0.001));
  double hetero = photomask_cost_musd(p, 16, MaskMode::FullyHeterogeneous);
  double initial = photomask_cost_musd(p, 16, MaskMode::Initial);
  double respin = photomask_cost_musd(p, 16, MaskMode::Respin);
  CHECK(hetero == doctest::Approx(480.0).epsilon(0.001));
  CHECK(std::abs(initial - 64.6) / 64.6 < 0.03);
  CHECK(std::abs(respin - 36.9) / 36.9 < 0.03);
  CHECK(respin < initial);
  CHECK(initial < hetero);
  // the straightforward-hardwiring estimate: 200 heterogeneous mask sets
  CHECK(photomask_cost_musd(p, 200, MaskMode::FullyHeterogeneous) ==
        doctest::Approx(6000.0).epsilon(0.001));
}

TEST_CASE("mask mode ordering holds across random valid parameters") {
  std::mt19937_64 gen(21);
  auto u01 = [&]() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; };
  for (int trial = 0; trial < 300; ++trial) {
    LithoParams p;
    p.total_layers = 40 + static_cast<int>(gen() % 60);
    p.shared_layers = 1 + static_cast<int>(gen() % p.total_layers);
    p.euv_layers = static_cast<int>(gen() % (p.shared_layers + 1));
    p.duv_mask_cost_musd = 0.05 + u01();
    p.euv_mask_cost_musd = p.duv_mask_cost_musd * (5.0 + 3.0 * u01());
    int variants = 2 + static_cast<int>(gen() % 64);
    double hetero = photomask_cost_musd(p, variants, MaskMode::FullyHeterogeneous);
    double initial = photomask_cost_musd(p, variants, MaskMode::Initial);
    double respin = photomask_cost_musd(p, variants, MaskMode::Respin);
    CHECK(respin < initial);
    CHECK(initial < hetero);
  }
}

TEST_CASE("litho validation rejects inconsistent stacks") {
  LithoParams p;
  p.shared_layers = 80;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = LithoParams{};
  p.euv_layers = 61;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = LithoParams{};
  p.euv_mask_cost_musd = p.duv_mask_cost_musd * 3.0;  // below the 5x floor
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("initial NRE and re-spin reproduce the published split") {
  NreParams nre;
  double initial = model_nre_musd(nre, 16);
  CHECK(std::abs(initial - 184.0) / 184.0 < 0.02);
  // photomasks 64.6 + wafer/test/packaging/IP 119.4
  CHECK(initial - photomask_cost_musd(nre.litho, 16, MaskMode::Initial) ==
        doctest::Approx(119.4).epsilon(1e-6));
  double respin = respin_cost_musd(nre, 16);
  CHECK(respin == doctest::Approx(44.3).epsilon(1e-6));

  // degenerate: one variant, no per-chip costs -> shared set + unique layers
  NreParams bare;
  bare.recurring_per_chip_musd = 0.0;
  bare.ip_tools_per_chip_musd = 0.0;
  CHECK(model_nre_musd(bare, 1) ==
        doctest::Approx(photomask_cost_musd(bare.litho, 1, MaskMode::Initial)));
}

TEST_CASE("per-model NRE under the fitted chip counts") {
  NreParams nre;
  const struct {
    const char* model;
    int chips;
    double published;
  } rows[] = {
      {"kimi-k2", 44, 462.0},
      {"deepseek-v3", 33, 353.0},
      {"qwq", 4, 69.0},
      {"llama-3", 1, 38.0},
  };
  for (const auto& row : rows) {
    double nre_musd = model_nre_musd(nre, row.chips);
    CAPTURE(row.model);
    CHECK(std::abs(nre_musd - row.published) / row.published < 0.10);
  }
}

TEST_CASE("tco reproduces the deployment table") {
  auto h = tco(hnlpu_scenario());
  CHECK(h.electricity_musd == doctest::Approx(0.19).epsilon(0.016));
  CHECK(h.total_capex_musd == doctest::Approx(186.0).epsilon(0.005));
  CHECK(h.static_tco_musd == doctest::Approx(186.2).epsilon(0.005));
  CHECK(h.dynamic_tco_musd == doctest::Approx(274.8).epsilon(0.005));

  auto g = tco(h100_scenario());
  CHECK(g.electricity_musd == doctest::Approx(45.44).epsilon(0.005));
  CHECK(g.total_capex_musd == doctest::Approx(485.0).epsilon(0.005));
  CHECK(g.static_tco_musd == doctest::Approx(530.4).epsilon(0.005));
  CHECK(g.dynamic_tco_musd == g.static_tco_musd);
}

TEST_CASE("tco is linear in electricity price and lifetime") {
  CostScenario s = hnlpu_scenario();
  auto base = tco(s);
  CostScenario pricier = s;
  pricier.electricity_usd_per_kwh *= 3.0;
  CHECK(tco(pricier).electricity_musd ==
        doctest::Approx(3.0 * base.electricity_musd).epsilon(1e-12));
  CostScenario longer = s;
  longer.lifetime_years *= 2.0;
  CHECK(tco(longer).electricity_musd ==
        doctest::Approx(2.0 * base.electricity_musd).epsilon(1e-12));
  CHECK(base.dynamic_tco_musd >= base.static_tco_musd);
  CostScenario no_updates = s;
  no_updates.updates_over_lifetime = 0;
  CHECK(tco(no_updates).dynamic_tco_musd == tco(no_updates).static_tco_musd);
}

TEST_CASE("efficiency ratios against the GPU cluster baseline") {
  auto r = efficiency_metrics(hnlpu_scenario(), h100_scenario());
  CHECK(std::abs(r.throughput_per_capex - 11.58) / 11.58 < 0.005);
  CHECK(std::abs(r.throughput_per_tco_static - 12.65) / 12.65 < 0.005);
  CHECK(std::abs(r.throughput_per_tco_dynamic - 8.57) / 8.57 < 0.005);

  auto unity = efficiency_metrics(h100_scenario(), h100_scenario());
  CHECK(unity.throughput_per_capex == 1.0);
  CHECK(unity.throughput_per_tco_static == 1.0);
  CHECK(unity.throughput_per_tco_dynamic == 1.0);
}

TEST_CASE("efficiency ratios are scale invariant") {
  CostScenario a = hnlpu_scenario();
  CostScenario b = h100_scenario();
  auto base = efficiency_metrics(a, b);
  for (CostScenario* s : {&a, &b}) {
    s->chips_capex_musd *= 7.0;
    s->server_networking_musd *= 7.0;
    s->datacenter_infra_musd *= 7.0;
    s->respin_cost_musd *= 7.0;
    s->electricity_usd_per_kwh *= 7.0;
  }
  auto scaled = efficiency_metrics(a, b);
  CHECK(scaled.throughput_per_capex ==
        doctest::Approx(base.throughput_per_capex).epsilon(1e-12));
  CHECK(scaled.throughput_per_tco_dynamic ==
        doctest::Approx(base.throughput_per_tco_dynamic).epsilon(1e-12));
}

TEST_CASE("energy efficiency from the system rollup") {
  auto sys = system_rollup(default_chip_budget(), 16, 1.4);
  double eff = energy_efficiency_tokens_per_kj(249960.0, sys.power_w);
  CHECK(std::abs(eff - 36226.0) / 36226.0 < 0.005);
}

TEST_CASE("carbon endpoints under the calibrated factors") {
  auto h = carbon(hnlpu_scenario());
  CHECK(std::abs(h.static_t - 780.0) / 780.0 < 0.05);
  CHECK(std::abs(h.dynamic_t - 794.0) / 794.0 < 0.05);
  CHECK(h.dynamic_t > h.static_t);

  auto g = carbon(h100_scenario());
  CHECK(std::abs(g.static_t - 182321.0) / 182321.0 < 0.05);

  CostScenario zero = hnlpu_scenario();
  zero.carbon = CarbonParams{};
  zero.carbon.grid_kgco2e_per_kwh = 0.0;
  zero.carbon.embodied_kg_per_mm2 = 0.0;
  auto z = carbon(zero);
  CHECK(z.static_t == 0.0);
  CHECK(z.dynamic_t == 0.0);
}

TEST_CASE("cost table rows carry the published labels") {
  CostScenario a = hnlpu_scenario();
  CostScenario b = h100_scenario();
  auto rows = cost_table(a, &b);
  auto find = [&](const std::string& label) -> const CostTableRow* {
    for (const auto& r : rows) {
      if (r.label.rfind(label, 0) == 0) return &r;
    }
    return nullptr;
  };
  REQUIRE(find("Total Initial CapEx"));
  REQUIRE(find("Static Model (No Updates)"));
  REQUIRE(find("Dynamic Model (Annual Updates)"));
  REQUIRE(find("Throughput / TCO (Dynamic)"));
  CHECK(find("Throughput / TCO (Dynamic)")->value == "8.57x");
  CHECK(find("Throughput / TCO (Static)")->value == "12.65x");
  CHECK(find("Throughput / CapEx")->value == "11.58x");
  REQUIRE(find("Electricity Cost"));
  CHECK(find("Electricity Cost")->value == "0.19 M$");
  CHECK(find("Electricity Cost")->baseline == "45.44 M$");
  REQUIRE(find("Total tCO2e Emissions"));

  std::ostringstream os;
  write_cost_table_csv(os, rows);
  CHECK(os.str().find("Throughput / TCO (Dynamic),8.57x,1.0x") !=
        std::string::npos);
}

}  // TEST_SUITE
