#include "hnlpu/hn.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <sstream>

namespace hnlpu {

namespace {

int ceil_div(std::int64_t a, std::int64_t b) {
  return static_cast<int>((a + b - 1) / b);
}

int ceil_log2(std::int64_t n) {
  int d = 0;
  while ((std::int64_t{1} << d) < n) ++d;
  return d;
}

}  // namespace

RegionPartition partition_weights(std::span<const Fp4Code> column) {
  if (column.empty()) {
    throw std::invalid_argument("partition_weights: empty weight column");
  }
  RegionPartition p;
  p.n_inputs = static_cast<int>(column.size());
  for (int i = 0; i < p.n_inputs; ++i) {
    p.regions[column[i].canonical().bits()].push_back(i);
  }
  return p;
}

InfeasibleAllocation::InfeasibleAllocation(int required_, int budget_)
    : std::runtime_error("slice allocation infeasible: needs " +
                         std::to_string(required_) + " slices, budget " +
                         std::to_string(budget_) + " (short by " +
                         std::to_string(required_ - budget_) + ")"),
      required(required_),
      budget(budget_) {}

SliceAssignment allocate_slices(const RegionPartition& partition,
                                SlicePolicy policy) {
  if (policy.width < 1 || policy.budget < 1) {
    throw std::invalid_argument("allocate_slices: width and budget must be >= 1");
  }
  int required = 0;
  for (const auto& region : partition.regions) {
    required += ceil_div(static_cast<int>(region.size()), policy.width);
  }
  if (required > policy.budget) {
    throw InfeasibleAllocation(required, policy.budget);
  }
  SliceAssignment out;
  out.policy = policy;
  out.slices.reserve(required);
  for (int code = 0; code < kFp4CodeCount; ++code) {
    const auto& region = partition.regions[code];
    for (std::size_t off = 0; off < region.size();
         off += static_cast<std::size_t>(policy.width)) {
      Slice s;
      s.region_code = static_cast<std::uint8_t>(code);
      auto end = std::min(region.size(), off + policy.width);
      s.inputs.assign(region.begin() + off, region.begin() + end);
      out.slices.push_back(std::move(s));
    }
  }
  return out;
}

int max_slices_required(int n_inputs, int max_regions, int width) {
  if (n_inputs < 1 || max_regions < 1 || max_regions > n_inputs || width < 1) {
    throw std::invalid_argument("max_slices_required: bad arguments");
  }
  // With m nonempty regions the worst packing puts all slack in one region:
  // m + floor((n - m) / width). Maximize over the admissible region counts.
  int best = 0;
  for (int m = 1; m <= max_regions; ++m) {
    best = std::max(best, m + (n_inputs - m) / width);
  }
  return best;
}

HardwiredNeuron hardwire_column(std::span<const Fp4Code> column,
                                double weight_scale, SlicePolicy policy) {
  HardwiredNeuron hn;
  hn.partition = partition_weights(column);
  hn.slices = allocate_slices(hn.partition, policy);
  hn.weight_scale = weight_scale;
  return hn;
}

std::int64_t hn_eval_bitserial(const HardwiredNeuron& hn,
                               const IntActivationVector& x) {
  if (static_cast<int>(x.values.size()) != hn.partition.n_inputs) {
    throw std::invalid_argument("hn_eval_bitserial: activation length mismatch");
  }
  if (hn.slices.policy.width > 64) {
    throw std::invalid_argument("hn_eval_bitserial: slice width > 64 unsupported");
  }
  const int b = x.bit_width;
  std::int64_t total = 0;
  std::array<std::int64_t, kFp4CodeCount> region_count{};
  for (int t = 0; t < b; ++t) {
    region_count.fill(0);
    for (const Slice& s : hn.slices.slices) {
      if (s.region_code == 0) continue;  // zero region multiplies to nothing
      std::uint64_t word = 0;
      int lane = 0;
      for (std::int32_t idx : s.inputs) {
        auto u = static_cast<std::uint32_t>(x.values[idx]);
        word |= static_cast<std::uint64_t>((u >> t) & 1u) << lane++;
      }
      region_count[s.region_code] += std::popcount(word);
    }
    std::int64_t plane_sum = 0;
    for (int code = 0; code < kFp4CodeCount; ++code) {
      if (region_count[code] != 0) {
        plane_sum += Fp4Code(static_cast<std::uint8_t>(code)).scaled_int() *
                     region_count[code];
      }
    }
    const std::int64_t plane_weight =
        (t == b - 1) ? -(std::int64_t{1} << t) : (std::int64_t{1} << t);
    total += plane_weight * plane_sum;
  }
  return total;
}

std::int64_t hn_eval_reference(std::span<const Fp4Code> weights,
                               const IntActivationVector& x) {
  if (weights.size() != x.values.size()) {
    throw std::invalid_argument("hn_eval_reference: length mismatch");
  }
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += static_cast<std::int64_t>(weights[i].scaled_int()) * x.values[i];
  }
  return acc;
}

HardwiredMatrix hardwire_matrix(const Fp4Matrix& m, SlicePolicy policy) {
  HardwiredMatrix out;
  out.n_inputs = m.rows;
  out.n_outputs = m.cols;
  out.weight_scale = m.scale;
  out.codes = m;
  out.neurons.reserve(m.cols);
  std::vector<Fp4Code> column(m.rows);
  for (int j = 0; j < m.cols; ++j) {
    for (int i = 0; i < m.rows; ++i) column[i] = m.at(i, j);
    out.neurons.push_back(hardwire_column(column, m.scale, policy));
  }
  return out;
}

std::vector<double> hn_matvec(const HardwiredMatrix& m,
                              const IntActivationVector& x) {
  std::vector<double> y(m.n_outputs);
  for (int j = 0; j < m.n_outputs; ++j) {
    y[j] = hn_dequantize(hn_eval_bitserial(m.neurons[j], x), x.scale,
                         m.weight_scale);
  }
  return y;
}

std::string format_hardwired_neuron(const HardwiredNeuron& hn,
                                    std::span<const Fp4Code> column) {
  std::ostringstream os;
  os.precision(17);
  os << "hn n_inputs=" << hn.partition.n_inputs
     << " slice_width=" << hn.slices.policy.width
     << " slice_budget=" << hn.slices.policy.budget
     << " weight_scale=" << hn.weight_scale << "\n";
  os << "codes";
  for (Fp4Code c : column) os << ' ' << static_cast<int>(c.bits());
  os << "\n";
  for (std::size_t s = 0; s < hn.slices.slices.size(); ++s) {
    const Slice& sl = hn.slices.slices[s];
    os << "slice " << s << " code=" << static_cast<int>(sl.region_code)
       << " inputs=";
    for (std::size_t i = 0; i < sl.inputs.size(); ++i) {
      if (i) os << ',';
      os << sl.inputs[i];
    }
    os << "\n";
  }
  return os.str();
}

HardwiredNeuron parse_hardwired_neuron(std::istream& in) {
  auto expect = [&](const std::string& got, const std::string& want) {
    if (got.rfind(want, 0) != 0) {
      throw std::runtime_error("parse_hardwired_neuron: expected '" + want +
                               "', got '" + got + "'");
    }
    return got.substr(want.size());
  };
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("parse_hardwired_neuron: empty input");
  }
  std::istringstream head(line);
  std::string tok;
  head >> tok;  // "hn"
  int n_inputs = 0;
  SlicePolicy policy;
  double weight_scale = 1.0;
  while (head >> tok) {
    if (tok.rfind("n_inputs=", 0) == 0) n_inputs = std::stoi(tok.substr(9));
    else if (tok.rfind("slice_width=", 0) == 0) policy.width = std::stoi(tok.substr(12));
    else if (tok.rfind("slice_budget=", 0) == 0) policy.budget = std::stoi(tok.substr(13));
    else if (tok.rfind("weight_scale=", 0) == 0) weight_scale = std::stod(tok.substr(13));
    else throw std::runtime_error("parse_hardwired_neuron: bad field " + tok);
  }
  if (!std::getline(in, line)) {
    throw std::runtime_error("parse_hardwired_neuron: missing codes line");
  }
  std::istringstream codes_line(expect(line, "codes"));
  std::vector<Fp4Code> column;
  int code;
  while (codes_line >> code) column.push_back(Fp4Code(static_cast<std::uint8_t>(code)));
  if (static_cast<int>(column.size()) != n_inputs) {
    throw std::runtime_error("parse_hardwired_neuron: code count mismatch");
  }
  // Slice lines are redundant with the deterministic allocation; rebuild and
  // use the remaining lines as a consistency check on count only.
  HardwiredNeuron hn = hardwire_column(column, weight_scale, policy);
  std::size_t listed = 0;
  while (std::getline(in, line)) {
    if (line.empty()) break;
    expect(line, "slice ");
    ++listed;
  }
  if (listed != hn.slices.slices.size()) {
    throw std::runtime_error("parse_hardwired_neuron: slice count mismatch");
  }
  return hn;
}

void MethodologyCostParams::validate() const {
  if (mac_count < 1 || sram_words_per_cycle < 1) {
    throw std::invalid_argument("methodology params: counts must be >= 1");
  }
  for (double v : {e_sram_read, e_mac, e_cmac, e_popcnt_bit, e_adder,
                   e_leak_per_area_cycle, area_unit}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("methodology params: costs must be finite and >= 0");
    }
  }
}

std::array<MethodologyReport, 3> compare_methodologies(
    int n_inputs, int n_outputs, int bit_width,
    const MethodologyCostParams& params) {
  if (n_inputs < 1 || n_outputs < 1 || bit_width < kMinActivationBits) {
    throw std::invalid_argument("compare_methodologies: bad dimensions");
  }
  params.validate();
  const std::int64_t weights =
      static_cast<std::int64_t>(n_inputs) * n_outputs;

  // Balanced-partition geometry of one metal-embedded neuron.
  const int active_regions = std::min(kFp4CodeCount, n_inputs);
  const int per_region = ceil_div(n_inputs, active_regions);
  const int slices_per_region = ceil_div(per_region, 32);
  const int slices_total = active_regions * slices_per_region;
  const int me_tree_depth = ceil_log2(active_regions) + ceil_log2(slices_per_region);

  MethodologyReport ma{Methodology::MacArray, 0, 0.0,
                       kAreaRatioMacArray * params.area_unit};
  ma.cycles = ceil_div(weights, params.mac_count) +
              ceil_div(weights, params.sram_words_per_cycle);
  ma.energy = static_cast<double>(weights) * (params.e_sram_read + params.e_mac) +
              params.e_leak_per_area_cycle * ma.area * static_cast<double>(ma.cycles);

  MethodologyReport ce{Methodology::CellEmbedding, 0, 0.0,
                       kAreaRatioCellEmbedding * params.area_unit};
  ce.cycles = ceil_log2(n_inputs);
  ce.energy = static_cast<double>(weights) * (params.e_cmac + params.e_adder) +
              params.e_leak_per_area_cycle * ce.area * static_cast<double>(ce.cycles);

  MethodologyReport me{Methodology::MetalEmbedding, 0, 0.0,
                       kAreaRatioMetalEmbedding * params.area_unit};
  me.cycles = bit_width + me_tree_depth;
  const double me_per_output =
      static_cast<double>(bit_width) *
      (static_cast<double>(n_inputs) * params.e_popcnt_bit +
       kFp4CodeCount * params.e_cmac +
       static_cast<double>(slices_total + active_regions) * params.e_adder);
  me.energy = me_per_output * static_cast<double>(n_outputs) +
              params.e_leak_per_area_cycle * me.area * static_cast<double>(me.cycles);

  return {ma, ce, me};
}

}  // namespace hnlpu
