#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hnlpu/costmodel.hpp"
#include "hnlpu/fabric.hpp"
#include "hnlpu/golden.hpp"
#include "hnlpu/hn.hpp"
#include "hnlpu/pipeline.hpp"

namespace hnlpu {

/// Scenario file problems (syntax, schema, unknown keys). The CLI maps this
/// to exit code 2.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Test hook: flips one weight code of one chip's shard after sharding, to
/// demonstrate that the equivalence check catches corruption.
struct FaultSpec {
  int layer = 0;
  int chip = 0;
  std::string tensor = "wq";  // wq | wk | wv | wo
  int row = 0;
  int col = 0;
};

struct VerifySpec {
  int tokens = 16;
  int neuron_checks = 500;
  int allocation_trials = 2000;
  std::optional<FaultSpec> fault;
};

struct PipelineSpec {
  PipelineConfig config;
  Workload workload;
};

struct MethodologySpec {
  int n_inputs = 1024;
  int n_outputs = 128;
  int bit_width = 4;
  MethodologyCostParams params;
};

struct ReferenceSystem {
  std::string name;
  double tokens_per_s = 0.0;
  double system_kw = 0.0;
};

struct NreSpec {
  int chip_variants = 16;
  NreParams params;
};

struct CostSpec {
  CostScenario scenario;
  std::optional<NreSpec> nre;  // when present, fills chip capex and re-spin
  std::vector<ReferenceSystem> references;
};

/// A fully resolved scenario file. Sections are optional; each command
/// requires the ones it consumes.
struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  std::optional<ModelConfig> model;
  LinkModel link;
  std::optional<VerifySpec> verify;
  std::optional<PipelineSpec> pipeline;
  std::optional<MethodologySpec> methodology;
  std::optional<CostSpec> cost;
  std::string config_hash;  // deterministic digest of the canonical form
};

/// Parses and validates a scenario file. Unknown keys anywhere are rejected
/// with their JSON path.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario_text(const std::string& text,
                             const std::string& origin);

}  // namespace hnlpu
