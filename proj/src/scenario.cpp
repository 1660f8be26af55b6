#include "hnlpu/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hnlpu {

namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
}

void check_keys(const json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  require_object(j, path);
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(path + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

ModelConfig parse_model(const json& j, const std::string& path) {
  check_keys(j, path,
             {"hidden", "layers", "q_heads", "kv_heads", "head_dim", "experts",
              "top_k", "expert_inner", "vocab", "activation_bits", "rope",
              "rope_base", "rms_eps"});
  ModelConfig cfg = ModelConfig::toy();
  cfg.hidden = get_or(j, "hidden", cfg.hidden);
  cfg.layers = get_or(j, "layers", cfg.layers);
  cfg.q_heads = get_or(j, "q_heads", cfg.q_heads);
  cfg.kv_heads = get_or(j, "kv_heads", cfg.kv_heads);
  cfg.head_dim = get_or(j, "head_dim", cfg.head_dim);
  cfg.experts = get_or(j, "experts", cfg.experts);
  cfg.top_k = get_or(j, "top_k", cfg.top_k);
  cfg.expert_inner = get_or(j, "expert_inner", cfg.expert_inner);
  cfg.vocab = get_or(j, "vocab", cfg.vocab);
  cfg.activation_bits = get_or(j, "activation_bits", cfg.activation_bits);
  cfg.rope = get_or(j, "rope", cfg.rope);
  cfg.rope_base = get_or(j, "rope_base", cfg.rope_base);
  cfg.rms_eps = get_or(j, "rms_eps", cfg.rms_eps);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

LinkModel parse_link(const json& j, const std::string& path) {
  check_keys(j, path, {"latency_ns", "bandwidth_bytes_per_s"});
  LinkModel link;
  link.latency_ns = get_or(j, "latency_ns", link.latency_ns);
  link.bandwidth_bytes_per_s =
      get_or(j, "bandwidth_bytes_per_s", link.bandwidth_bytes_per_s);
  if (link.latency_ns < 0 || !(link.bandwidth_bytes_per_s > 0)) {
    throw ConfigError(path + ": latency must be >= 0 and bandwidth > 0");
  }
  return link;
}

VerifySpec parse_verify(const json& j, const std::string& path) {
  check_keys(j, path, {"tokens", "neuron_checks", "allocation_trials", "fault"});
  VerifySpec v;
  v.tokens = get_or(j, "tokens", v.tokens);
  v.neuron_checks = get_or(j, "neuron_checks", v.neuron_checks);
  v.allocation_trials = get_or(j, "allocation_trials", v.allocation_trials);
  if (v.tokens < 1 || v.neuron_checks < 0 || v.allocation_trials < 0) {
    throw ConfigError(path + ": counts out of range");
  }
  if (j.contains("fault")) {
    const json& f = j.at("fault");
    check_keys(f, path + ".fault", {"layer", "chip", "tensor", "row", "col"});
    FaultSpec fault;
    fault.layer = get_or(f, "layer", 0);
    fault.chip = get_or(f, "chip", 0);
    fault.tensor = get_or<std::string>(f, "tensor", "wq");
    fault.row = get_or(f, "row", 0);
    fault.col = get_or(f, "col", 0);
    if (fault.tensor != "wq" && fault.tensor != "wk" && fault.tensor != "wv" &&
        fault.tensor != "wo") {
      throw ConfigError(path + ".fault.tensor: must be wq|wk|wv|wo");
    }
    v.fault = fault;
  }
  return v;
}

PipelineSpec parse_pipeline(const json& j, const std::string& path) {
  check_keys(j, path,
             {"stages_per_layer", "layers", "stage_latency_cycles", "clock_hz",
              "workload", "workload_file"});
  PipelineSpec p;
  p.config.stages_per_layer = get_or(j, "stages_per_layer", 6);
  p.config.layers = get_or(j, "layers", 36);
  p.config.stage_latency_cycles =
      get_or<std::int64_t>(j, "stage_latency_cycles", 4000);
  p.config.clock_hz = get_or(j, "clock_hz", 1e9);
  try {
    p.config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (j.contains("workload") && j.contains("workload_file")) {
    throw ConfigError(path + ": give either workload or workload_file");
  }
  if (j.contains("workload_file")) {
    p.workload = load_workload(j.at("workload_file").get<std::string>());
  } else if (j.contains("workload")) {
    const json& w = j.at("workload");
    if (!w.is_array()) throw ConfigError(path + ".workload: expected an array");
    int i = 0;
    for (const json& entry : w) {
      const std::string epath = path + ".workload[" + std::to_string(i++) + "]";
      check_keys(entry, epath, {"arrival_s", "prompt", "generate", "count"});
      SequenceSpec s;
      s.arrival_s = get_or(entry, "arrival_s", 0.0);
      s.prompt_tokens = get_or(entry, "prompt", 0);
      s.generate_tokens = get_or(entry, "generate", 0);
      int count = get_or(entry, "count", 1);
      if (s.arrival_s < 0 || s.prompt_tokens < 0 || s.generate_tokens < 0 ||
          count < 1) {
        throw ConfigError(epath + ": negative field");
      }
      for (int n = 0; n < count; ++n) p.workload.sequences.push_back(s);
    }
  }
  return p;
}

MethodologySpec parse_methodology(const json& j, const std::string& path) {
  check_keys(j, path, {"n_inputs", "n_outputs", "bit_width", "params"});
  MethodologySpec m;
  m.n_inputs = get_or(j, "n_inputs", m.n_inputs);
  m.n_outputs = get_or(j, "n_outputs", m.n_outputs);
  m.bit_width = get_or(j, "bit_width", m.bit_width);
  if (j.contains("params")) {
    const json& p = j.at("params");
    check_keys(p, path + ".params",
               {"mac_count", "sram_words_per_cycle", "e_sram_read", "e_mac",
                "e_cmac", "e_popcnt_bit", "e_adder", "e_leak_per_area_cycle",
                "area_unit"});
    m.params.mac_count = get_or(p, "mac_count", m.params.mac_count);
    m.params.sram_words_per_cycle =
        get_or(p, "sram_words_per_cycle", m.params.sram_words_per_cycle);
    m.params.e_sram_read = get_or(p, "e_sram_read", m.params.e_sram_read);
    m.params.e_mac = get_or(p, "e_mac", m.params.e_mac);
    m.params.e_cmac = get_or(p, "e_cmac", m.params.e_cmac);
    m.params.e_popcnt_bit = get_or(p, "e_popcnt_bit", m.params.e_popcnt_bit);
    m.params.e_adder = get_or(p, "e_adder", m.params.e_adder);
    m.params.e_leak_per_area_cycle =
        get_or(p, "e_leak_per_area_cycle", m.params.e_leak_per_area_cycle);
    m.params.area_unit = get_or(p, "area_unit", m.params.area_unit);
  }
  try {
    m.params.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return m;
}

LithoParams parse_litho(const json& j, const std::string& path) {
  check_keys(j, path,
             {"total_layers", "shared_layers", "euv_layers",
              "euv_mask_cost_musd", "duv_mask_cost_musd", "chips_per_system"});
  LithoParams litho;
  litho.total_layers = get_or(j, "total_layers", litho.total_layers);
  litho.shared_layers = get_or(j, "shared_layers", litho.shared_layers);
  litho.euv_layers = get_or(j, "euv_layers", litho.euv_layers);
  litho.euv_mask_cost_musd =
      get_or(j, "euv_mask_cost_musd", litho.euv_mask_cost_musd);
  litho.duv_mask_cost_musd =
      get_or(j, "duv_mask_cost_musd", litho.duv_mask_cost_musd);
  litho.chips_per_system = get_or(j, "chips_per_system", litho.chips_per_system);
  try {
    litho.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return litho;
}

CostSpec parse_cost(const json& j, const std::string& path) {
  check_keys(j, path,
             {"name", "relative_throughput", "it_power_mw", "pue",
              "electricity_usd_per_kwh", "chips_capex_musd",
              "server_networking_musd", "datacenter_infra_musd",
              "respin_cost_musd", "updates_over_lifetime", "lifetime_years",
              "nre", "carbon", "references"});
  CostSpec spec;
  CostScenario& s = spec.scenario;
  s.name = get_or<std::string>(j, "name", "scenario");
  s.relative_throughput = get_or(j, "relative_throughput", 1.0);
  s.it_power_mw = get_or(j, "it_power_mw", 0.0);
  s.pue = get_or(j, "pue", 1.4);
  s.electricity_usd_per_kwh =
      get_or(j, "electricity_usd_per_kwh", s.electricity_usd_per_kwh);
  s.server_networking_musd = get_or(j, "server_networking_musd", 0.0);
  s.datacenter_infra_musd = get_or(j, "datacenter_infra_musd", 0.0);
  s.updates_over_lifetime = get_or(j, "updates_over_lifetime", 0);
  s.lifetime_years = get_or(j, "lifetime_years", 3.0);

  if (j.contains("nre")) {
    const json& n = j.at("nre");
    check_keys(n, path + ".nre",
               {"chip_variants", "recurring_per_chip_musd",
                "ip_tools_per_chip_musd", "litho"});
    NreSpec nre;
    nre.chip_variants = get_or(n, "chip_variants", 16);
    nre.params.recurring_per_chip_musd =
        get_or(n, "recurring_per_chip_musd", nre.params.recurring_per_chip_musd);
    nre.params.ip_tools_per_chip_musd =
        get_or(n, "ip_tools_per_chip_musd", nre.params.ip_tools_per_chip_musd);
    if (n.contains("litho")) {
      nre.params.litho = parse_litho(n.at("litho"), path + ".nre.litho");
    }
    if (nre.chip_variants < 1) {
      throw ConfigError(path + ".nre.chip_variants: must be >= 1");
    }
    spec.nre = nre;
    s.chips_capex_musd = model_nre_musd(nre.params, nre.chip_variants);
    s.respin_cost_musd = respin_cost_musd(nre.params, nre.chip_variants);
  }
  // direct values override computed ones
  s.chips_capex_musd = get_or(j, "chips_capex_musd", s.chips_capex_musd);
  s.respin_cost_musd = get_or(j, "respin_cost_musd", s.respin_cost_musd);

  if (j.contains("carbon")) {
    const json& c = j.at("carbon");
    check_keys(c, path + ".carbon",
               {"grid_kgco2e_per_kwh", "embodied_kg_per_mm2",
                "embodied_fixed_kg", "respin_embodied_kg", "silicon_area_mm2"});
    s.carbon.grid_kgco2e_per_kwh =
        get_or(c, "grid_kgco2e_per_kwh", s.carbon.grid_kgco2e_per_kwh);
    s.carbon.embodied_kg_per_mm2 =
        get_or(c, "embodied_kg_per_mm2", s.carbon.embodied_kg_per_mm2);
    s.carbon.embodied_fixed_kg =
        get_or(c, "embodied_fixed_kg", s.carbon.embodied_fixed_kg);
    s.carbon.respin_embodied_kg =
        get_or(c, "respin_embodied_kg", s.carbon.respin_embodied_kg);
    s.carbon.silicon_area_mm2 =
        get_or(c, "silicon_area_mm2", s.carbon.silicon_area_mm2);
  }
  if (j.contains("references")) {
    const json& refs = j.at("references");
    if (!refs.is_array()) {
      throw ConfigError(path + ".references: expected an array");
    }
    int i = 0;
    for (const json& r : refs) {
      const std::string rpath = path + ".references[" + std::to_string(i++) + "]";
      check_keys(r, rpath, {"name", "tokens_per_s", "system_kw"});
      ReferenceSystem ref;
      ref.name = get_or<std::string>(r, "name", "ref");
      ref.tokens_per_s = get_or(r, "tokens_per_s", 0.0);
      ref.system_kw = get_or(r, "system_kw", 0.0);
      spec.references.push_back(ref);
    }
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return spec;
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

}  // namespace

Scenario parse_scenario_text(const std::string& text,
                             const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  check_keys(j, origin,
             {"name", "seed", "model", "fabric", "verify", "pipeline",
              "methodology", "cost"});
  Scenario sc;
  sc.name = get_or<std::string>(j, "name", "scenario");
  sc.seed = get_or<std::uint64_t>(j, "seed", 0);
  if (j.contains("model")) sc.model = parse_model(j.at("model"), origin + ".model");
  if (j.contains("fabric")) sc.link = parse_link(j.at("fabric"), origin + ".fabric");
  if (j.contains("verify")) {
    sc.verify = parse_verify(j.at("verify"), origin + ".verify");
  }
  if (j.contains("pipeline")) {
    sc.pipeline = parse_pipeline(j.at("pipeline"), origin + ".pipeline");
  }
  if (j.contains("methodology")) {
    sc.methodology = parse_methodology(j.at("methodology"), origin + ".methodology");
  }
  if (j.contains("cost")) sc.cost = parse_cost(j.at("cost"), origin + ".cost");
  sc.config_hash = fnv1a_hex(j.dump());
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_scenario_text(buf.str(), path);
}

}  // namespace hnlpu
