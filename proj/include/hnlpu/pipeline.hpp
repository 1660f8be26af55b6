#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hnlpu {

/// Per-layer six-stage pipeline over all layers: slots = stages_per_layer *
/// layers tokens can be in flight, one entering per stage_latency tick.
struct PipelineConfig {
  int stages_per_layer = 6;
  int layers = 36;
  std::int64_t stage_latency_cycles = 4000;
  double clock_hz = 1e9;

  int slots() const { return stages_per_layer * layers; }
  double stage_seconds() const {
    return static_cast<double>(stage_latency_cycles) / clock_hz;
  }
  /// Time for one token to traverse all stages.
  double token_latency_seconds() const {
    return static_cast<double>(slots()) * stage_seconds();
  }
  void validate() const;
};

struct SequenceSpec {
  double arrival_s = 0.0;
  int prompt_tokens = 0;
  int generate_tokens = 0;
};

/// Continuous batching: sequences admitted in arrival order whenever one of
/// the slots-many sequence positions is free.
struct Workload {
  std::vector<SequenceSpec> sequences;
};

/// One sequence per record: "arrival_seconds prompt_tokens generate_tokens";
/// blank lines and lines starting with '#' are skipped.
Workload load_workload(const std::string& path);

struct OccupancySample {
  double time_s = 0.0;
  int tokens_in_flight = 0;
  int active_sequences = 0;
};

struct PipelineReport {
  std::int64_t completed_tokens = 0;
  double makespan_s = 0.0;
  double throughput_tokens_per_s = 0.0;        // completed / makespan
  double steady_state_tokens_per_s = 0.0;      // completion-to-completion rate
  double mean_token_latency_s = 0.0;           // ready -> completion
  double p95_token_latency_s = 0.0;
  std::vector<OccupancySample> occupancy;
  std::vector<double> stage_utilization;       // one entry per stage
};

/// Closed form: token latency = slots * stage_latency / clock;
/// throughput = occupancy / token latency. Throws when occupancy is outside
/// [1, slots].
double steady_state_throughput(const PipelineConfig& cfg, int occupancy);

/// Event-driven simulation. Prefill tokens of a sequence are independent and
/// stream in back to back; decode token t+1 becomes ready only when token t
/// leaves the last stage. Freed slots are reusable at the same tick.
PipelineReport simulate(const PipelineConfig& cfg, const Workload& workload);

void write_report_csv(std::ostream& os, const PipelineReport& report);
void write_occupancy_csv(std::ostream& os, const PipelineReport& report);

}  // namespace hnlpu
