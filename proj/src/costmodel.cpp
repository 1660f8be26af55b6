#include "hnlpu/costmodel.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace hnlpu {

double ChipBudget::total_area_mm2() const {
  double a = 0.0;
  for (const auto& c : components) a += c.area_mm2;
  return a;
}

double ChipBudget::total_power_w() const {
  double p = 0.0;
  for (const auto& c : components) p += c.power_w;
  return p;
}

void ChipBudget::validate(double stated_area, double stated_power) const {
  if (std::abs(total_area_mm2() - stated_area) > 0.01 ||
      std::abs(total_power_w() - stated_power) > 0.01) {
    throw std::invalid_argument("ChipBudget: component sums disagree with totals");
  }
}

ChipBudget default_chip_budget() {
  ChipBudget b;
  b.components = {
      {"HN Array", 573.16, 76.92},
      {"VEX", 27.87, 33.09},
      {"Control Unit", 0.02, 0.0},
      {"Attention Buffer", 136.11, 85.73},
      {"Interconnect Engine", 37.92, 49.65},
      {"HBM PHY", 52.0, 63.0},
  };
  return b;
}

SystemRollup system_rollup(const ChipBudget& chip, int n_chips,
                           double overhead_factor) {
  if (n_chips < 1) throw std::invalid_argument("system_rollup: n_chips < 1");
  if (!(overhead_factor >= 1.0)) {
    throw std::invalid_argument("system_rollup: overhead factor must be >= 1");
  }
  SystemRollup r;
  r.area_mm2 = chip.total_area_mm2() * n_chips;
  r.power_w = chip.total_power_w() * n_chips * overhead_factor;
  return r;
}

void LithoParams::validate() const {
  if (total_layers < 1 || shared_layers < 0 || shared_layers > total_layers) {
    throw std::invalid_argument("LithoParams: shared + unique must equal total layers");
  }
  if (euv_layers < 0 || euv_layers > shared_layers) {
    throw std::invalid_argument("LithoParams: EUV layers must fit in the shared stack");
  }
  if (!(duv_mask_cost_musd > 0.0) || !(euv_mask_cost_musd > 0.0)) {
    throw std::invalid_argument("LithoParams: mask costs must be positive");
  }
  const double ratio = euv_mask_cost_musd / duv_mask_cost_musd;
  if (ratio < 5.0 || ratio > 8.0) {
    throw std::invalid_argument("LithoParams: EUV/DUV cost ratio outside [5, 8]");
  }
  if (chips_per_system < 1) {
    throw std::invalid_argument("LithoParams: chips_per_system < 1");
  }
}

double LithoParams::full_set_cost_musd() const {
  return euv_layers * euv_mask_cost_musd +
         (total_layers - euv_layers) * duv_mask_cost_musd;
}

double photomask_cost_musd(const LithoParams& p, int n_chip_variants,
                           MaskMode mode) {
  p.validate();
  if (n_chip_variants < 1) {
    throw std::invalid_argument("photomask_cost: variant count < 1");
  }
  const double unique_per_variant = p.unique_layers() * p.duv_mask_cost_musd;
  switch (mode) {
    case MaskMode::FullyHeterogeneous:
      return n_chip_variants * p.full_set_cost_musd();
    case MaskMode::Initial: {
      const double shared = p.euv_layers * p.euv_mask_cost_musd +
                            (p.shared_layers - p.euv_layers) * p.duv_mask_cost_musd;
      return shared + n_chip_variants * unique_per_variant;
    }
    case MaskMode::Respin:
      return n_chip_variants * unique_per_variant;
  }
  throw std::logic_error("photomask_cost: unknown mode");
}

double model_nre_musd(const NreParams& p, int n_chip_variants) {
  return photomask_cost_musd(p.litho, n_chip_variants, MaskMode::Initial) +
         n_chip_variants *
             (p.recurring_per_chip_musd + p.ip_tools_per_chip_musd);
}

double respin_cost_musd(const NreParams& p, int n_chip_variants) {
  return photomask_cost_musd(p.litho, n_chip_variants, MaskMode::Respin) +
         n_chip_variants * p.recurring_per_chip_musd;
}

void CostScenario::validate() const {
  auto nonneg = [](double v, const char* what) {
    if (!(v >= 0.0)) {
      throw std::invalid_argument(std::string("CostScenario: ") + what +
                                  " must be >= 0");
    }
  };
  nonneg(it_power_mw, "IT power");
  nonneg(electricity_usd_per_kwh, "electricity price");
  nonneg(chips_capex_musd, "chip capex");
  nonneg(server_networking_musd, "server/networking cost");
  nonneg(datacenter_infra_musd, "datacenter infra cost");
  nonneg(respin_cost_musd, "re-spin cost");
  nonneg(lifetime_years, "lifetime");
  if (!(pue >= 1.0)) throw std::invalid_argument("CostScenario: PUE must be >= 1");
  if (updates_over_lifetime < 0) {
    throw std::invalid_argument("CostScenario: update count must be >= 0");
  }
}

TcoBreakdown tco(const CostScenario& s) {
  s.validate();
  TcoBreakdown b;
  b.total_capex_musd =
      s.chips_capex_musd + s.server_networking_musd + s.datacenter_infra_musd;
  b.energy_kwh = s.it_power_mw * 1000.0 * s.pue * s.lifetime_hours();
  b.electricity_musd = b.energy_kwh * s.electricity_usd_per_kwh / 1e6;
  b.opex_musd = b.electricity_musd;
  b.static_tco_musd = b.total_capex_musd + b.opex_musd;
  b.dynamic_tco_musd =
      b.static_tco_musd + s.updates_over_lifetime * s.respin_cost_musd;
  return b;
}

CarbonReport carbon(const CostScenario& s) {
  s.validate();
  const CarbonParams& c = s.carbon;
  CarbonReport r;
  r.operational_t = tco(s).energy_kwh * c.grid_kgco2e_per_kwh / 1000.0;
  r.embodied_t = (c.silicon_area_mm2 * c.embodied_kg_per_mm2 +
                  c.embodied_fixed_kg) / 1000.0;
  r.static_t = r.operational_t + r.embodied_t;
  r.dynamic_t =
      r.static_t + s.updates_over_lifetime * c.respin_embodied_kg / 1000.0;
  return r;
}

EfficiencyRatios efficiency_metrics(const CostScenario& a,
                                    const CostScenario& baseline) {
  TcoBreakdown ta = tco(a);
  TcoBreakdown tb = tco(baseline);
  auto ratio = [&](double cost_a, double cost_b) {
    if (!(cost_a > 0.0) || !(cost_b > 0.0) ||
        !(baseline.relative_throughput > 0.0)) {
      throw std::invalid_argument("efficiency_metrics: zero cost or throughput");
    }
    return (a.relative_throughput / cost_a) /
           (baseline.relative_throughput / cost_b);
  };
  EfficiencyRatios r;
  r.throughput_per_capex = ratio(ta.total_capex_musd, tb.total_capex_musd);
  r.throughput_per_tco_static = ratio(ta.static_tco_musd, tb.static_tco_musd);
  r.throughput_per_tco_dynamic = ratio(ta.dynamic_tco_musd, tb.dynamic_tco_musd);
  return r;
}

double energy_efficiency_tokens_per_kj(double tokens_per_s, double system_w) {
  if (!(system_w > 0.0)) {
    throw std::invalid_argument("energy efficiency: system power must be > 0");
  }
  return tokens_per_s / (system_w / 1000.0);
}

namespace {

std::string fmt(double v, int decimals = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

}  // namespace

std::vector<CostTableRow> cost_table(const CostScenario& s,
                                     const CostScenario* baseline) {
  TcoBreakdown b = tco(s);
  CarbonReport c = carbon(s);
  std::vector<CostTableRow> rows;
  auto add = [&](const std::string& label, const std::string& value,
                 const std::string& base = "") {
    rows.push_back({label, value, base});
  };

  TcoBreakdown bb;
  CarbonReport cb;
  if (baseline) {
    bb = tco(*baseline);
    cb = carbon(*baseline);
  }
  auto pair = [&](const std::string& label, double va, double vb,
                  int decimals = 2, const std::string& suffix = "") {
    add(label, fmt(va, decimals) + suffix,
        baseline ? fmt(vb, decimals) + suffix : "");
  };

  pair("Equivalent Throughput", s.relative_throughput,
       baseline ? baseline->relative_throughput : 0.0, 2, "x");
  pair("IT Power Load (MW)", s.it_power_mw, baseline ? baseline->it_power_mw : 0.0, 4);
  pair("Total Datacenter Power (MW)", s.it_power_mw * s.pue,
       baseline ? baseline->it_power_mw * baseline->pue : 0.0, 4);
  pair("Chips NRE / GPU Price", s.chips_capex_musd,
       baseline ? baseline->chips_capex_musd : 0.0, 1, " M$");
  pair("Server / Networking Cost", s.server_networking_musd,
       baseline ? baseline->server_networking_musd : 0.0, 1, " M$");
  pair("Datacenter Infra. Cost", s.datacenter_infra_musd,
       baseline ? baseline->datacenter_infra_musd : 0.0, 2, " M$");
  pair("Total Initial CapEx", b.total_capex_musd, bb.total_capex_musd, 1, " M$");
  pair("Annual Update Re-spin Cost", s.respin_cost_musd,
       baseline ? baseline->respin_cost_musd : 0.0, 1, " M$");
  {
    std::ostringstream label;
    label << "Electricity Cost (@ $" << s.electricity_usd_per_kwh << "/kWh)";
    pair(label.str(), b.electricity_musd, bb.electricity_musd, 2, " M$");
  }
  pair("Static Model (No Updates)", b.static_tco_musd, bb.static_tco_musd, 1, " M$");
  pair("Dynamic Model (Annual Updates)", b.dynamic_tco_musd, bb.dynamic_tco_musd,
       1, " M$");
  if (baseline) {
    EfficiencyRatios r = efficiency_metrics(s, *baseline);
    add("Throughput / CapEx", fmt(r.throughput_per_capex, 2) + "x", "1.0x");
    add("Throughput / TCO (Static)", fmt(r.throughput_per_tco_static, 2) + "x",
        "1.0x");
    add("Throughput / TCO (Dynamic)", fmt(r.throughput_per_tco_dynamic, 2) + "x",
        "1.0x");
  }
  add("Total tCO2e Emissions (Static / Dynamic)",
      fmt(c.static_t, 0) + " / " + fmt(c.dynamic_t, 0),
      baseline ? fmt(cb.static_t, 0) + " / " + fmt(cb.dynamic_t, 0) : "");
  return rows;
}

void write_cost_table_csv(std::ostream& os,
                          const std::vector<CostTableRow>& rows) {
  os << "row,value,baseline\n";
  for (const auto& r : rows) {
    std::string label = r.label;
    for (auto& ch : label) {
      if (ch == ',') ch = ';';
    }
    os << label << ',' << r.value << ',' << r.baseline << '\n';
  }
}

}  // namespace hnlpu
