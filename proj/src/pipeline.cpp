#include "hnlpu/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>

namespace hnlpu {

void PipelineConfig::validate() const {
  if (stages_per_layer < 1 || layers < 1 || stage_latency_cycles < 1 ||
      !(clock_hz > 0.0)) {
    throw std::invalid_argument("PipelineConfig: all parameters must be positive");
  }
}

Workload load_workload(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open workload file: " + path);
  Workload w;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    SequenceSpec s;
    if (!(ls >> s.arrival_s >> s.prompt_tokens >> s.generate_tokens)) {
      throw std::runtime_error("workload line " + std::to_string(lineno) +
                               ": expected 'arrival prompt generate'");
    }
    if (s.arrival_s < 0 || s.prompt_tokens < 0 || s.generate_tokens < 0) {
      throw std::runtime_error("workload line " + std::to_string(lineno) +
                               ": negative field");
    }
    w.sequences.push_back(s);
  }
  return w;
}

double steady_state_throughput(const PipelineConfig& cfg, int occupancy) {
  cfg.validate();
  if (occupancy < 1 || occupancy > cfg.slots()) {
    throw std::invalid_argument("steady_state_throughput: occupancy out of range");
  }
  return static_cast<double>(occupancy) / cfg.token_latency_seconds();
}

namespace {

struct SeqState {
  SequenceSpec spec;
  int id = 0;
  std::int64_t admitted_at = 0;
  int completed_tokens = 0;
  int total_tokens() const {
    return spec.prompt_tokens + spec.generate_tokens;
  }
};

struct ReadyToken {
  std::int64_t ready_cycle;
  int seq;
  int idx;  // 0..total-1; prompt tokens first
  bool operator>(const ReadyToken& o) const {
    return std::tie(ready_cycle, seq, idx) > std::tie(o.ready_cycle, o.seq, o.idx);
  }
};

struct Event {
  std::int64_t cycle;
  int type;  // 0 arrival, 1 completion
  int seq;
  int idx;
  std::int64_t ready_cycle;  // for completions: when the token became ready
  bool operator>(const Event& o) const {
    return std::tie(cycle, type, seq, idx) > std::tie(o.cycle, o.type, o.seq, o.idx);
  }
};

}  // namespace

PipelineReport simulate(const PipelineConfig& cfg, const Workload& workload) {
  cfg.validate();
  const std::int64_t delta = cfg.stage_latency_cycles;
  const std::int64_t traverse = static_cast<std::int64_t>(cfg.slots()) * delta;
  const double cycle_s = 1.0 / cfg.clock_hz;

  PipelineReport report;
  report.stage_utilization.assign(cfg.slots(), 0.0);
  if (workload.sequences.empty()) return report;

  std::vector<SeqState> seqs(workload.sequences.size());
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  for (std::size_t i = 0; i < workload.sequences.size(); ++i) {
    seqs[i].spec = workload.sequences[i];
    seqs[i].id = static_cast<int>(i);
    events.push(Event{
        static_cast<std::int64_t>(std::llround(workload.sequences[i].arrival_s *
                                               cfg.clock_hz)),
        0, static_cast<int>(i), 0, 0});
  }

  std::priority_queue<ReadyToken, std::vector<ReadyToken>, std::greater<>> ready;
  std::deque<int> waiting;  // arrived, not yet admitted (arrival order)
  int active_seqs = 0;
  int in_flight = 0;
  std::int64_t entry_free_at = 0;
  std::int64_t now = 0;
  std::int64_t first_completion = -1;
  std::int64_t last_completion = 0;
  std::vector<double> latencies;

  auto ceil_tick = [&](std::int64_t t) { return ((t + delta - 1) / delta) * delta; };

  auto sample = [&]() {
    report.occupancy.push_back(
        {static_cast<double>(now) * cycle_s, in_flight, active_seqs});
  };

  auto make_ready = [&](int seq, int idx, std::int64_t at) {
    ready.push(ReadyToken{at, seq, idx});
  };

  auto try_admit = [&]() {
    int admitted = 0;
    while (!waiting.empty() && active_seqs < cfg.slots()) {
      int s = waiting.front();
      waiting.pop_front();
      SeqState& st = seqs[s];
      st.admitted_at = now;
      if (st.total_tokens() == 0) continue;  // nothing to run
      ++active_seqs;
      ++admitted;
      if (st.spec.prompt_tokens > 0) {
        // prompt tokens are dependency-free
        for (int i = 0; i < st.spec.prompt_tokens; ++i) make_ready(s, i, now);
      } else {
        make_ready(s, 0, now);  // first decode token
      }
    }
    if (admitted > 0) sample();
  };

  while (true) {
    bool have_entry = !ready.empty();
    std::int64_t t_entry = 0;
    if (have_entry) {
      t_entry = std::max(entry_free_at, ceil_tick(ready.top().ready_cycle));
    }
    bool have_event = !events.empty();
    std::int64_t t_event = have_event ? events.top().cycle : 0;
    if (!have_entry && !have_event) break;

    if (have_event && (!have_entry || t_event <= t_entry)) {
      Event ev = events.top();
      events.pop();
      now = ev.cycle;
      if (ev.type == 0) {  // arrival
        waiting.push_back(ev.seq);
        try_admit();
      } else {  // completion
        SeqState& st = seqs[ev.seq];
        ++report.completed_tokens;
        ++st.completed_tokens;
        --in_flight;
        latencies.push_back(static_cast<double>(now - ev.ready_cycle) * cycle_s);
        if (first_completion < 0) first_completion = now;
        last_completion = now;
        const int prompts = st.spec.prompt_tokens;
        if (ev.idx == prompts - 1 && st.spec.generate_tokens > 0 &&
            st.completed_tokens == prompts) {
          make_ready(ev.seq, prompts, now);  // decode begins after full prompt
        } else if (ev.idx >= prompts && ev.idx + 1 < st.total_tokens()) {
          make_ready(ev.seq, ev.idx + 1, now);  // auto-regressive dependency
        }
        if (st.completed_tokens == st.total_tokens()) {
          --active_seqs;
          sample();  // the freed slot is visible before the refill
          try_admit();
        } else {
          sample();
        }
      }
    } else {
      // admit the earliest-ready token into stage 1
      ReadyToken tok = ready.top();
      ready.pop();
      now = t_entry;
      entry_free_at = now + delta;
      ++in_flight;
      events.push(Event{now + traverse, 1, tok.seq, tok.idx, tok.ready_cycle});
      sample();
    }
  }

  report.makespan_s = static_cast<double>(last_completion) * cycle_s;
  if (report.makespan_s > 0) {
    report.throughput_tokens_per_s =
        static_cast<double>(report.completed_tokens) / report.makespan_s;
  }
  if (report.completed_tokens >= 2 && last_completion > first_completion) {
    report.steady_state_tokens_per_s =
        static_cast<double>(report.completed_tokens - 1) /
        (static_cast<double>(last_completion - first_completion) * cycle_s);
  } else {
    report.steady_state_tokens_per_s = report.throughput_tokens_per_s;
  }
  if (!latencies.empty()) {
    double sum = 0.0;
    for (double l : latencies) sum += l;
    report.mean_token_latency_s = sum / static_cast<double>(latencies.size());
    std::sort(latencies.begin(), latencies.end());
    std::size_t idx = (latencies.size() * 95 + 99) / 100;  // ceil(0.95 n)
    report.p95_token_latency_s = latencies[idx == 0 ? 0 : idx - 1];
  }
  if (report.makespan_s > 0) {
    const double busy =
        static_cast<double>(report.completed_tokens) * delta * cycle_s;
    for (auto& u : report.stage_utilization) u = busy / report.makespan_s;
  }
  return report;
}

void write_report_csv(std::ostream& os, const PipelineReport& report) {
  os << "metric,value\n";
  os << "completed_tokens," << report.completed_tokens << '\n';
  os << "makespan_s," << report.makespan_s << '\n';
  os << "throughput_tokens_per_s," << report.throughput_tokens_per_s << '\n';
  os << "steady_state_tokens_per_s," << report.steady_state_tokens_per_s << '\n';
  os << "mean_token_latency_s," << report.mean_token_latency_s << '\n';
  os << "p95_token_latency_s," << report.p95_token_latency_s << '\n';
  os << "stage_utilization,"
     << (report.stage_utilization.empty() ? 0.0 : report.stage_utilization[0])
     << '\n';
}

void write_occupancy_csv(std::ostream& os, const PipelineReport& report) {
  os << "time_s,tokens_in_flight,active_sequences\n";
  for (const auto& s : report.occupancy) {
    os << s.time_s << ',' << s.tokens_in_flight << ',' << s.active_sequences
       << '\n';
  }
}

}  // namespace hnlpu
