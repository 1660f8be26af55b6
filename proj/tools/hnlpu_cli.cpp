// Scenario-driven driver: correctness verification, dataflow + pipeline
// simulation, weight-embedding methodology comparison, and deployment cost
// tables. Exit codes: 0 success, 1 verification failure, 2 configuration
// error.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"

#include "hnlpu/costmodel.hpp"
#include "hnlpu/dataflow.hpp"
#include "hnlpu/pipeline.hpp"
#include "hnlpu/scenario.hpp"

namespace {

using hnlpu::Scenario;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailed = 1;
constexpr int kExitConfigError = 2;

struct Verdict {
  std::string check;
  bool pass = false;
  std::string detail;
};

struct RunReport {
  std::string command;
  std::string scenario_name;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<Verdict> verdicts;
  json metrics = json::object();

  bool all_passed() const {
    for (const auto& v : verdicts) {
      if (!v.pass) return false;
    }
    return true;
  }
};

struct OutputOptions {
  std::string out_dir;
  std::string format = "table";
};

json report_to_json(const RunReport& r) {
  json j;
  j["command"] = r.command;
  j["scenario"] = r.scenario_name;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  json checks = json::array();
  for (const auto& v : r.verdicts) {
    checks.push_back({{"check", v.check}, {"pass", v.pass}, {"detail", v.detail}});
  }
  j["checks"] = checks;
  j["metrics"] = r.metrics;
  return j;
}

void print_table(const RunReport& r) {
  std::cout << "# " << r.command << " scenario=" << r.scenario_name
            << " hash=" << r.config_hash << " seed=" << r.seed << "\n";
  for (const auto& v : r.verdicts) {
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << v.check;
    if (!v.detail.empty()) std::cout << "  (" << v.detail << ")";
    std::cout << "\n";
  }
  for (const auto& [key, value] : r.metrics.items()) {
    std::cout << key << " = " << value.dump() << "\n";
  }
}

void write_report_files(const RunReport& r, const OutputOptions& out) {
  if (out.out_dir.empty()) return;
  std::filesystem::create_directories(out.out_dir);
  const auto dir = std::filesystem::path(out.out_dir);
  {
    std::ofstream os(dir / (r.command + "_report.json"));
    os << report_to_json(r).dump(2) << "\n";
  }
  {
    std::ofstream os(dir / (r.command + "_report.csv"));
    os << "check,pass,detail\n";
    for (const auto& v : r.verdicts) {
      os << v.check << ',' << (v.pass ? 1 : 0) << ',' << v.detail << '\n';
    }
    for (const auto& [key, value] : r.metrics.items()) {
      os << key << ',' << value.dump() << ",\n";
    }
  }
}

void emit(const RunReport& r, const OutputOptions& out) {
  if (out.format == "json") {
    std::cout << report_to_json(r).dump(2) << "\n";
  } else if (out.format == "csv") {
    std::cout << "check,pass,detail\n";
    for (const auto& v : r.verdicts) {
      std::cout << v.check << ',' << (v.pass ? 1 : 0) << ',' << v.detail << '\n';
    }
  } else {
    print_table(r);
  }
  write_report_files(r, out);
}

double rel_diff(std::span<const double> a, std::span<const double> b) {
  double max_abs = 0.0, max_err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    max_abs = std::max(max_abs, std::abs(b[i]));
    max_err = std::max(max_err, std::abs(a[i] - b[i]));
  }
  return max_abs > 0 ? max_err / max_abs : max_err;
}

void apply_fault(hnlpu::ShardedModel& sharded, const hnlpu::FaultSpec& fault) {
  if (fault.layer < 0 || fault.layer >= static_cast<int>(sharded.layers.size()) ||
      fault.chip < 0 || fault.chip >= hnlpu::kGridChips) {
    throw hnlpu::ConfigError("verify.fault: layer or chip out of range");
  }
  auto& chip = sharded.layers[fault.layer].chips[fault.chip];
  hnlpu::HardwiredMatrix* target = nullptr;
  if (fault.tensor == "wq") target = &chip.wq;
  if (fault.tensor == "wk") target = &chip.wk;
  if (fault.tensor == "wv") target = &chip.wv;
  if (fault.tensor == "wo") target = &chip.wo;
  if (fault.row < 0 || fault.row >= target->codes.rows || fault.col < 0 ||
      fault.col >= target->codes.cols) {
    throw hnlpu::ConfigError("verify.fault: index outside the shard");
  }
  hnlpu::Fp4Matrix corrupted = target->codes;
  auto& code = corrupted.codes[static_cast<std::size_t>(fault.row) *
                                   corrupted.cols + fault.col];
  code = static_cast<std::uint8_t>(code ^ 0x7);
  *target = hnlpu::hardwire_matrix(corrupted, sharded.slice_policy);
}

// -- verify -------------------------------------------------------------

RunReport cmd_verify(const Scenario& sc, const OutputOptions& out) {
  if (!sc.model) throw hnlpu::ConfigError("verify needs a model section");
  hnlpu::VerifySpec spec = sc.verify.value_or(hnlpu::VerifySpec{});
  RunReport report;
  report.command = "verify";
  report.scenario_name = sc.name;
  report.config_hash = sc.config_hash;
  report.seed = sc.seed;

  const hnlpu::ModelConfig& cfg = *sc.model;
  hnlpu::GoldenModel model = hnlpu::make_random_model(cfg, sc.seed);
  hnlpu::ShardedModel sharded = hnlpu::shard_model(model);
  if (spec.fault) apply_fault(sharded, *spec.fault);

  // golden vs distributed greedy generation
  {
    hnlpu::ShardedKvCache dcache = hnlpu::make_sharded_cache(cfg);
    hnlpu::KvCache gcache = hnlpu::make_kv_cache(cfg);
    hnlpu::Fabric fabric(sc.link);
    int dtok = static_cast<int>(sc.seed % cfg.vocab);
    int gtok = dtok;
    bool tokens_match = true;
    double worst = 0.0;
    for (int step = 0; step < spec.tokens; ++step) {
      std::vector<std::vector<double>> gold_layers;
      auto gold = hnlpu::forward_token(model, gtok, gcache, &gold_layers);
      auto dist = hnlpu::run_token(sharded, dtok, dcache, fabric);
      worst = std::max(worst, rel_diff(dist.logits, gold));
      for (int l = 0; l < cfg.layers; ++l) {
        worst = std::max(worst, rel_diff(dist.layer_outputs[l], gold_layers[l]));
      }
      gtok = hnlpu::sample_greedy(gold);
      dtok = hnlpu::sample_greedy(dist.logits);
      tokens_match = tokens_match && (gtok == dtok);
    }
    Verdict v;
    v.check = "distributed-equivalence";
    v.pass = tokens_match && worst < 1e-8;
    v.detail = "max rel err " + std::to_string(worst) +
               (tokens_match ? ", tokens match" : ", token mismatch");
    report.verdicts.push_back(v);
    report.metrics["equivalence_max_rel_err"] = worst;
    report.metrics["decode_token_bytes"] =
        hnlpu::decode_token_bytes(fabric) / spec.tokens;
  }

  // bit-serial exactness on random neurons
  {
    std::mt19937_64 gen(sc.seed ^ 0x9e3779b97f4a7c15ull);
    bool exact = true;
    for (int i = 0; i < spec.neuron_checks && exact; ++i) {
      int n = 1 + static_cast<int>(gen() % 1024);
      int b = 2 + static_cast<int>(gen() % 11);
      std::vector<hnlpu::Fp4Code> col(n);
      for (auto& c : col) c = hnlpu::Fp4Code(static_cast<std::uint8_t>(gen() >> 60));
      hnlpu::IntActivationVector x;
      x.bit_width = b;
      x.values.resize(n);
      const std::int32_t lo = -(1 << (b - 1)), hi = (1 << (b - 1)) - 1;
      for (auto& val : x.values) {
        val = lo + static_cast<std::int32_t>(
                       gen() % static_cast<std::uint64_t>(hi - lo + 1));
      }
      auto hn = hnlpu::hardwire_column(col, 1.0, sharded.slice_policy);
      exact = hnlpu::hn_eval_bitserial(hn, x) == hnlpu::hn_eval_reference(col, x);
    }
    Verdict v;
    v.check = "bit-serial-exactness";
    v.pass = exact;
    v.detail = std::to_string(spec.neuron_checks) + " random neurons";
    report.verdicts.push_back(v);
  }

  // slice budget worst case plus adversarial random partitions
  {
    const int bound = hnlpu::max_slices_required(2880, 16, 32);
    bool ok = bound == 105 && bound <= 106;
    std::mt19937_64 gen(sc.seed ^ 0xda942042e4dd58b5ull);
    for (int t = 0; t < spec.allocation_trials && ok; ++t) {
      std::array<int, 16> sizes{};
      int left = 2880;
      for (int r = 0; r < 15; ++r) {
        sizes[r] = static_cast<int>(gen() %
                                    static_cast<std::uint64_t>(left - (15 - r)));
        left -= sizes[r];
      }
      sizes[15] = left;
      int total = 0;
      for (int s : sizes) total += (s + 31) / 32;
      ok = total <= bound;
    }
    Verdict v;
    v.check = "slice-budget";
    v.pass = ok;
    v.detail = "worst case " + std::to_string(bound) + " of 106";
    report.verdicts.push_back(v);
    report.metrics["max_slices_2880_16_32"] = bound;
  }

  emit(report, out);
  return report;
}

// -- simulate -----------------------------------------------------------

RunReport cmd_simulate(const Scenario& sc, const OutputOptions& out) {
  if (!sc.pipeline) throw hnlpu::ConfigError("simulate needs a pipeline section");
  RunReport report;
  report.command = "simulate";
  report.scenario_name = sc.name;
  report.config_hash = sc.config_hash;
  report.seed = sc.seed;

  const hnlpu::PipelineSpec& spec = *sc.pipeline;
  hnlpu::PipelineReport pr = hnlpu::simulate(spec.config, spec.workload);
  report.metrics["slots"] = spec.config.slots();
  report.metrics["closed_form_full_occupancy_tokens_per_s"] =
      hnlpu::steady_state_throughput(spec.config, spec.config.slots());
  report.metrics["occupancy_1_latency_s"] = spec.config.token_latency_seconds();
  report.metrics["completed_tokens"] = pr.completed_tokens;
  report.metrics["throughput_tokens_per_s"] = pr.throughput_tokens_per_s;
  report.metrics["steady_state_tokens_per_s"] = pr.steady_state_tokens_per_s;
  report.metrics["mean_token_latency_s"] = pr.mean_token_latency_s;
  report.metrics["p95_token_latency_s"] = pr.p95_token_latency_s;

  if (!out.out_dir.empty()) {
    std::filesystem::create_directories(out.out_dir);
    const auto dir = std::filesystem::path(out.out_dir);
    {
      std::ofstream os(dir / "pipeline_report.csv");
      hnlpu::write_report_csv(os, pr);
    }
    {
      std::ofstream os(dir / "occupancy.csv");
      hnlpu::write_occupancy_csv(os, pr);
    }
  }

  // a short decode run provides the collective traces
  if (sc.model) {
    hnlpu::GoldenModel model = hnlpu::make_random_model(*sc.model, sc.seed);
    hnlpu::ShardedModel sharded = hnlpu::shard_model(model);
    hnlpu::ShardedKvCache cache = hnlpu::make_sharded_cache(*sc.model);
    hnlpu::Fabric fabric(sc.link);
    int tok = static_cast<int>(sc.seed % sc.model->vocab);
    for (int step = 0; step < 4; ++step) {
      auto res = hnlpu::run_token(sharded, tok, cache, fabric);
      tok = hnlpu::sample_greedy(res.logits);
    }
    report.metrics["trace_collectives"] = fabric.traces().size();
    report.metrics["trace_bytes_per_link"] = fabric.total_bytes();
    if (!out.out_dir.empty()) {
      std::ofstream os(std::filesystem::path(out.out_dir) / "traces.csv");
      hnlpu::Fabric::write_traces_csv(os, fabric.traces());
    }
  }

  std::cout << "throughput " << pr.steady_state_tokens_per_s
            << " tokens/s, mean latency " << pr.mean_token_latency_s * 1e3
            << " ms\n";
  emit(report, out);
  return report;
}

// -- cost ---------------------------------------------------------------

RunReport cmd_cost(const Scenario& sc, const Scenario* baseline,
                   const OutputOptions& out) {
  if (!sc.cost) throw hnlpu::ConfigError("cost needs a cost section");
  if (baseline && !baseline->cost) {
    throw hnlpu::ConfigError("baseline scenario has no cost section");
  }
  RunReport report;
  report.command = "cost";
  report.scenario_name = sc.name;
  report.config_hash = sc.config_hash;
  report.seed = sc.seed;

  const hnlpu::CostSpec& spec = *sc.cost;
  const hnlpu::CostScenario* base =
      baseline ? &baseline->cost->scenario : nullptr;
  auto rows = hnlpu::cost_table(spec.scenario, base);
  if (spec.nre) {
    const auto& litho = spec.nre->params.litho;
    const int n = spec.nre->chip_variants;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f M$",
                  hnlpu::photomask_cost_musd(litho, n, hnlpu::MaskMode::Initial));
    rows.push_back({"Photomasks (Initial)", buf, ""});
    std::snprintf(buf, sizeof buf, "%.1f M$",
                  hnlpu::photomask_cost_musd(litho, n, hnlpu::MaskMode::Respin));
    rows.push_back({"Photomasks (Re-spin)", buf, ""});
    std::snprintf(buf, sizeof buf, "%.1f M$",
                  hnlpu::photomask_cost_musd(litho, n,
                                             hnlpu::MaskMode::FullyHeterogeneous));
    rows.push_back({"Photomasks (Fully Heterogeneous)", buf, ""});
  }

  // Table-3-style throughput and efficiency context when a pipeline is given.
  if (sc.pipeline) {
    const auto& cfg = sc.pipeline->config;
    const double tokens_per_s =
        hnlpu::steady_state_throughput(cfg, cfg.slots());
    auto sys = hnlpu::system_rollup(hnlpu::default_chip_budget(), 16, 1.4);
    const double eff =
        hnlpu::energy_efficiency_tokens_per_kj(tokens_per_s, sys.power_w);
    report.metrics["throughput_tokens_per_s"] = tokens_per_s;
    report.metrics["system_power_kw"] = sys.power_w / 1000.0;
    report.metrics["system_area_mm2"] = sys.area_mm2;
    report.metrics["energy_efficiency_tokens_per_kj"] = eff;
    for (const auto& ref : spec.references) {
      if (ref.tokens_per_s > 0) {
        report.metrics["throughput_ratio_vs_" + ref.name] =
            tokens_per_s / ref.tokens_per_s;
      }
      if (ref.system_kw > 0 && ref.tokens_per_s > 0) {
        report.metrics["energy_efficiency_ratio_vs_" + ref.name] =
            eff / hnlpu::energy_efficiency_tokens_per_kj(ref.tokens_per_s,
                                                         ref.system_kw * 1000.0);
      }
    }
  }

  json jrows = json::array();
  for (const auto& r : rows) {
    jrows.push_back({{"row", r.label}, {"value", r.value}, {"baseline", r.baseline}});
  }
  report.metrics["table"] = jrows;

  if (out.format == "json") {
    std::cout << report_to_json(report).dump(2) << "\n";
  } else if (out.format == "csv") {
    hnlpu::write_cost_table_csv(std::cout, rows);
  } else {
    std::cout << "# cost scenario=" << sc.name << " hash=" << sc.config_hash
              << "\n";
    for (const auto& r : rows) {
      std::cout << r.label << ": " << r.value;
      if (!r.baseline.empty()) std::cout << "  [baseline " << r.baseline << "]";
      std::cout << "\n";
    }
    for (const auto& [key, value] : report.metrics.items()) {
      if (key != "table") std::cout << key << " = " << value.dump() << "\n";
    }
  }
  if (!out.out_dir.empty()) {
    std::filesystem::create_directories(out.out_dir);
    std::ofstream os(std::filesystem::path(out.out_dir) / "cost_table.csv");
    hnlpu::write_cost_table_csv(os, rows);
    write_report_files(report, out);
  }
  return report;
}

// -- compare ------------------------------------------------------------

RunReport cmd_compare(const Scenario& sc, const OutputOptions& out) {
  hnlpu::MethodologySpec spec =
      sc.methodology.value_or(hnlpu::MethodologySpec{});
  RunReport report;
  report.command = "compare";
  report.scenario_name = sc.name;
  report.config_hash = sc.config_hash;
  report.seed = sc.seed;
  auto reports = hnlpu::compare_methodologies(spec.n_inputs, spec.n_outputs,
                                              spec.bit_width, spec.params);
  const char* names[3] = {"mac-array", "cell-embedding", "metal-embedding"};
  json rows = json::array();
  for (int i = 0; i < 3; ++i) {
    rows.push_back({{"methodology", names[i]},
                    {"cycles", reports[i].cycles},
                    {"energy", reports[i].energy},
                    {"area", reports[i].area}});
  }
  report.metrics["methodologies"] = rows;
  Verdict v;
  v.check = "orderings";
  v.pass = reports[2].cycles < reports[1].cycles &&
           reports[1].cycles <= reports[0].cycles &&
           reports[2].energy < reports[1].energy &&
           reports[1].energy < reports[0].energy;
  v.detail = "cycles ME<CE<=MA, energy ME<CE<MA";
  report.verdicts.push_back(v);
  emit(report, out);
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hardwired-neurons LPU simulator and cost modeler"};
  app.require_subcommand(1);

  std::string scenario_path, baseline_path;
  OutputOptions out;
  std::int64_t seed_override = -1;

  auto add_common = [&](CLI::App* cmd, bool with_baseline = false) {
    cmd->add_option("--scenario", scenario_path, "scenario file (json)")
        ->required();
    cmd->add_option("--seed", seed_override, "override the scenario seed");
    cmd->add_option("--out", out.out_dir, "directory for report files");
    cmd->add_option("--format", out.format, "table | csv | json")
        ->check(CLI::IsMember({"table", "csv", "json"}));
    if (with_baseline) {
      cmd->add_option("--baseline", baseline_path,
                      "baseline scenario for relative ratios");
    }
  };

  CLI::App* verify = app.add_subcommand("verify", "run correctness suites");
  add_common(verify);
  CLI::App* simulate = app.add_subcommand("simulate", "pipeline + dataflow run");
  add_common(simulate);
  CLI::App* cost = app.add_subcommand("cost", "deployment cost table");
  add_common(cost, true);
  CLI::App* compare =
      app.add_subcommand("compare", "weight-embedding methodology comparison");
  add_common(compare);

  CLI11_PARSE(app, argc, argv);

  try {
    Scenario sc = hnlpu::load_scenario(scenario_path);
    if (seed_override >= 0) sc.seed = static_cast<std::uint64_t>(seed_override);

    if (verify->parsed()) {
      return cmd_verify(sc, out).all_passed() ? kExitOk
                                              : kExitVerificationFailed;
    }
    if (simulate->parsed()) {
      cmd_simulate(sc, out);
      return kExitOk;
    }
    if (cost->parsed()) {
      std::optional<Scenario> baseline;
      if (!baseline_path.empty()) baseline = hnlpu::load_scenario(baseline_path);
      cmd_cost(sc, baseline ? &*baseline : nullptr, out);
      return kExitOk;
    }
    if (compare->parsed()) {
      return cmd_compare(sc, out).all_passed() ? kExitOk
                                               : kExitVerificationFailed;
    }
  } catch (const hnlpu::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerificationFailed;
  }
  return kExitConfigError;
}
