#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace hnlpu {

/// Per-chip area/power breakdown. default_chip_budget() carries the
/// post-layout figures of the 5nm implementation.
struct ChipComponent {
  std::string name;
  double area_mm2 = 0.0;
  double power_w = 0.0;
};

struct ChipBudget {
  std::vector<ChipComponent> components;
  double total_area_mm2() const;
  double total_power_w() const;
  /// Checks the stated totals against the component sums (<= 0.01 slack).
  void validate(double stated_area, double stated_power) const;
};

ChipBudget default_chip_budget();

struct SystemRollup {
  double area_mm2 = 0.0;
  double power_w = 0.0;
};

/// area = n_chips * chip area; power = n_chips * chip power * overhead.
SystemRollup system_rollup(const ChipBudget& chip, int n_chips,
                           double overhead_factor);

/// Photomask stack split into chip-shared and per-chip-unique layers. The
/// unique layers sit above M8 and use DUV masks only; EUV masks appear only
/// in the shared stack.
struct LithoParams {
  int total_layers = 70;
  int shared_layers = 60;
  int euv_layers = 15;                 // all within the shared stack
  double euv_mask_cost_musd = 1.1544;  // reflective mask premium
  double duv_mask_cost_musd = 0.230625;
  int chips_per_system = 16;

  void validate() const;
  int unique_layers() const { return total_layers - shared_layers; }
  /// One complete heterogeneous mask set (EUV + DUV layers).
  double full_set_cost_musd() const;
};

enum class MaskMode {
  FullyHeterogeneous,  // every chip variant buys a complete set
  Initial,             // one shared stack + per-variant unique DUV layers
  Respin,              // shared stack reused; unique layers only
};

double photomask_cost_musd(const LithoParams& p, int n_chip_variants,
                           MaskMode mode);

struct NreParams {
  LithoParams litho;
  /// Wafer + test + packaging per chip variant, every tapeout.
  double recurring_per_chip_musd = 0.4625;
  /// IP, tools and services per chip variant, initial tapeout only.
  double ip_tools_per_chip_musd = 7.0;
};

/// Initial tapeout NRE: shared+unique photomasks plus per-chip costs.
double model_nre_musd(const NreParams& p, int n_chip_variants);
/// Parameter-only update: unique-layer masks plus per-chip recurring costs.
double respin_cost_musd(const NreParams& p, int n_chip_variants);

/// Embodied + operational carbon factors; all explicit configuration.
struct CarbonParams {
  double grid_kgco2e_per_kwh = 0.37;
  double embodied_kg_per_mm2 = 0.18;     // fabricated silicon
  double embodied_fixed_kg = 0.0;        // servers, packaging, integration
  double respin_embodied_kg = 0.0;       // per parameter-update re-spin
  double silicon_area_mm2 = 0.0;
};

/// Everything the 3-year deployment costing needs.
struct CostScenario {
  std::string name;
  double relative_throughput = 1.0;
  double it_power_mw = 0.0;
  double pue = 1.4;
  double electricity_usd_per_kwh = 0.095;
  double chips_capex_musd = 0.0;  // chip NRE or GPU purchase
  double server_networking_musd = 0.0;
  double datacenter_infra_musd = 0.0;
  double respin_cost_musd = 0.0;
  int updates_over_lifetime = 0;
  double lifetime_years = 3.0;
  CarbonParams carbon;

  void validate() const;
  double lifetime_hours() const { return lifetime_years * 8760.0; }
};

struct TcoBreakdown {
  double total_capex_musd = 0.0;
  double electricity_musd = 0.0;
  double opex_musd = 0.0;
  double static_tco_musd = 0.0;   // capex + opex
  double dynamic_tco_musd = 0.0;  // static + updates * respin
  double energy_kwh = 0.0;        // lifetime electricity drawn
};

TcoBreakdown tco(const CostScenario& s);

struct CarbonReport {
  double operational_t = 0.0;
  double embodied_t = 0.0;
  double static_t = 0.0;
  double dynamic_t = 0.0;
};

CarbonReport carbon(const CostScenario& s);

struct EfficiencyRatios {
  double throughput_per_capex = 1.0;
  double throughput_per_tco_static = 1.0;
  double throughput_per_tco_dynamic = 1.0;
};

/// Ratios of relative throughput per dollar, normalized so the baseline is
/// 1.0 everywhere.
EfficiencyRatios efficiency_metrics(const CostScenario& a,
                                    const CostScenario& baseline);

/// tokens/s per kW == tokens per kJ.
double energy_efficiency_tokens_per_kj(double tokens_per_s, double system_w);

/// One published line of the deployment cost table.
struct CostTableRow {
  std::string label;
  std::string value;
  std::string baseline;  // empty when no baseline scenario is given
};

std::vector<CostTableRow> cost_table(const CostScenario& s,
                                     const CostScenario* baseline);

void write_cost_table_csv(std::ostream& os,
                          const std::vector<CostTableRow>& rows);

}  // namespace hnlpu
