#include <cmath>

#include "doctest.h"
#include "hnlpu/scenario.hpp"

using namespace hnlpu;

TEST_SUITE("scenario") {

TEST_CASE("full scenario parses into resolved sections") {
  const std::string text = R"({
    "name": "example",
    "seed": 7,
    "model": { "hidden": 16, "layers": 2, "q_heads": 8, "kv_heads": 4,
               "head_dim": 4, "experts": 16, "top_k": 2, "expert_inner": 16,
               "vocab": 64 },
    "fabric": { "latency_ns": 50.0, "bandwidth_bytes_per_s": 64e9 },
    "verify": { "tokens": 4 },
    "pipeline": { "layers": 36, "workload": [
      { "arrival_s": 0.0, "prompt": 1, "generate": 3, "count": 5 } ] },
    "methodology": { "bit_width": 4 },
    "cost": { "name": "x", "it_power_mw": 1.0,
              "chips_capex_musd": 10.0, "updates_over_lifetime": 1,
              "respin_cost_musd": 2.0 }
  })";
  Scenario sc = parse_scenario_text(text, "test");
  CHECK(sc.name == "example");
  CHECK(sc.seed == 7);
  REQUIRE(sc.model);
  CHECK(sc.model->hidden == 16);
  CHECK(sc.link.latency_ns == 50.0);
  REQUIRE(sc.verify);
  CHECK(sc.verify->tokens == 4);
  REQUIRE(sc.pipeline);
  CHECK(sc.pipeline->config.slots() == 216);
  CHECK(sc.pipeline->workload.sequences.size() == 5);
  REQUIRE(sc.methodology);
  REQUIRE(sc.cost);
  CHECK(sc.cost->scenario.respin_cost_musd == 2.0);
  CHECK(!sc.config_hash.empty());
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK_THROWS_AS(parse_scenario_text(R"({"bogus": 1})", "t"), ConfigError);
  try {
    parse_scenario_text(R"({"model": {"hidden": 16, "bogus": 1}})", "t");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("t.model") != std::string::npos);
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
}

TEST_CASE("schema violations carry the offending field") {
  // invalid divisibility
  CHECK_THROWS_AS(parse_scenario_text(R"({"model": {"hidden": 17}})", "t"),
                  ConfigError);
  // bad JSON syntax
  CHECK_THROWS_AS(parse_scenario_text("{", "t"), ConfigError);
  // negative workload field
  CHECK_THROWS_AS(parse_scenario_text(
                      R"({"pipeline": {"workload": [{"prompt": -1}]}})", "t"),
                  ConfigError);
  // both workload forms at once
  CHECK_THROWS_AS(
      parse_scenario_text(
          R"({"pipeline": {"workload": [], "workload_file": "w.txt"}})", "t"),
      ConfigError);
}

TEST_CASE("config hash is deterministic and content sensitive") {
  const std::string a = R"({"seed": 1})";
  const std::string b = R"({"seed": 2})";
  CHECK(parse_scenario_text(a, "t").config_hash ==
        parse_scenario_text(a, "t").config_hash);
  CHECK(parse_scenario_text(a, "t").config_hash !=
        parse_scenario_text(b, "t").config_hash);
}

TEST_CASE("nre section computes chip capex and re-spin cost") {
  const std::string text = R"({
    "cost": {
      "it_power_mw": 0.05,
      "nre": { "chip_variants": 16 }
    }
  })";
  Scenario sc = parse_scenario_text(text, "t");
  REQUIRE(sc.cost);
  CHECK(std::abs(sc.cost->scenario.chips_capex_musd - 184.0) < 2.0);
  CHECK(std::abs(sc.cost->scenario.respin_cost_musd - 44.3) < 1e-9);

  // direct values take precedence over the computed ones
  const std::string text2 = R"({
    "cost": {
      "it_power_mw": 0.05,
      "chips_capex_musd": 7.0,
      "nre": { "chip_variants": 16 }
    }
  })";
  CHECK(parse_scenario_text(text2, "t").cost->scenario.chips_capex_musd == 7.0);
}

TEST_CASE("litho calibration residuals stay within the published targets") {
  // the shipped defaults must hit all four anchors from one parameter set
  LithoParams p;
  CHECK(std::abs(p.full_set_cost_musd() - 30.0) / 30.0 < 0.001);
  CHECK(std::abs(photomask_cost_musd(p, 16, MaskMode::FullyHeterogeneous) -
                 480.0) /
            480.0 <
        0.001);
  CHECK(std::abs(photomask_cost_musd(p, 16, MaskMode::Initial) - 64.6) / 64.6 <
        0.001);
  CHECK(std::abs(photomask_cost_musd(p, 16, MaskMode::Respin) - 36.9) / 36.9 <
        0.001);
}

}  // TEST_SUITE
