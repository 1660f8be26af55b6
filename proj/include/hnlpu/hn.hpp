#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hnlpu/numerics.hpp"

namespace hnlpu {

/// Grouping of one output neuron's inputs by shared weight value: all input
/// indices multiplying the same FP4 value land in the same region. Codes +0
/// and -0 merge into the single zero region, so at most 15 regions are
/// populated. regions[k] is keyed by canonical code k and holds ascending
/// input indices; regions[8] stays empty.
struct RegionPartition {
  int n_inputs = 0;
  std::array<std::vector<std::int32_t>, kFp4CodeCount> regions;
};

RegionPartition partition_weights(std::span<const Fp4Code> column);

/// Fixed POPCNT slice geometry of the prefabricated neuron fabric.
struct SlicePolicy {
  int width = 32;    // inputs per POPCNT slice
  int budget = 106;  // slices available per hardwired neuron
};

/// One POPCNT slice: counts set bits among its wired inputs, all of which
/// share the region's weight code.
struct Slice {
  std::uint8_t region_code = 0;  // canonical code of the served region
  std::vector<std::int32_t> inputs;
};

struct SliceAssignment {
  SlicePolicy policy;
  std::vector<Slice> slices;
};

class InfeasibleAllocation : public std::runtime_error {
public:
  InfeasibleAllocation(int required, int budget);
  int required = 0;
  int budget = 0;
};

/// Packs each region into ceil(|region|/width) slices, regions in ascending
/// canonical code order, inputs in ascending index order. Throws
/// InfeasibleAllocation when the total exceeds the budget.
SliceAssignment allocate_slices(const RegionPartition& partition,
                                SlicePolicy policy);

/// Worst case of sum_r ceil(|r|/width) over all partitions of n_inputs into
/// at most max_regions nonempty regions. This is what the fixed slice budget
/// must cover for the fabric to accept any weight column.
int max_slices_required(int n_inputs, int max_regions, int width);

/// One output neuron with its weights fixed in the routing: a region
/// partition realized as POPCNT slices plus the per-tensor weight scale.
struct HardwiredNeuron {
  RegionPartition partition;
  SliceAssignment slices;
  double weight_scale = 1.0;
};

HardwiredNeuron hardwire_column(std::span<const Fp4Code> column,
                                double weight_scale, SlicePolicy policy);

/// Bit-serial evaluation: for every LSB-first plane, POPCNT per slice,
/// scale the per-region counts by the region's 2x weight integer, and
/// accumulate with the plane weight. Returns sum_i scaled_int(w_i) * x_i
/// exactly; zero-region slices are skipped (they contribute nothing).
/// Requires slice width <= 64.
std::int64_t hn_eval_bitserial(const HardwiredNeuron& hn,
                               const IntActivationVector& x);

/// Plain dot product sum_i scaled_int(w_i) * x_i, the dense reference the
/// bit-serial path must match exactly.
std::int64_t hn_eval_reference(std::span<const Fp4Code> weights,
                               const IntActivationVector& x);

/// Applies both per-tensor scales and the 1/2 weight-integer factor once.
inline double hn_dequantize(std::int64_t acc, double activation_scale,
                            double weight_scale) {
  return static_cast<double>(acc) * activation_scale * weight_scale / 2.0;
}

/// A weight matrix as one hardwired neuron per output column, sharing the
/// input activation vector. The source codes are kept for serialization and
/// reassembly checks.
struct HardwiredMatrix {
  int n_inputs = 0;
  int n_outputs = 0;
  double weight_scale = 1.0;
  std::vector<HardwiredNeuron> neurons;
  Fp4Matrix codes;
};

HardwiredMatrix hardwire_matrix(const Fp4Matrix& m, SlicePolicy policy);

/// Dequantized y[j] for every output neuron.
std::vector<double> hn_matvec(const HardwiredMatrix& m,
                              const IntActivationVector& x);

/// Structured text form of a neuron (code list + slice map), parseable back;
/// used for golden-file regression of the allocation policy.
std::string format_hardwired_neuron(const HardwiredNeuron& hn,
                                    std::span<const Fp4Code> column);
HardwiredNeuron parse_hardwired_neuron(std::istream& in);

// --- weight-embedding methodology comparison --------------------------------
//
// Abstract-unit cost model for one (1 x n_inputs) * (n_inputs x n_outputs)
// matrix-vector product under three embeddings:
//   MacArray        weights in SRAM, fetched into a multiplier array
//   CellEmbedding   one constant multiplier per weight in silicon cells
//   MetalEmbedding  region routing + POPCNT slices, bit-serial inputs
//
// Cycle model:
//   MA  = ceil(W / mac_count) + ceil(W / sram_words_per_cycle),  W = n_in*n_out
//   CE  = ceil(log2(n_inputs))                 (full-width adder tree)
//   ME  = bit_width + ceil(log2(active regions))
//                   + ceil(log2(max slices per region))
// Energy accumulates per-event costs plus leakage proportional to area and
// occupied cycles. Areas are pinned to the post-layout calibration
// CE : MA-SRAM : ME = 14.3 : 1 : 0.95.
//
// Documented valid range for the MetalEmbedding < CellEmbedding < MacArray
// orderings: bit_width = 4, n_inputs in [512, 8192], n_outputs >= 1, and
// params with e_sram_read in [2, 10], e_mac in [0.5, 2], e_cmac in
// [0.15, 0.5], e_popcnt_bit in [0.01, 0.08], e_adder in [0.1, 0.4],
// e_leak_per_area_cycle in [0.1, 2].

enum class Methodology { MacArray, CellEmbedding, MetalEmbedding };

struct MethodologyCostParams {
  int mac_count = 1024;
  int sram_words_per_cycle = 1024;
  double e_sram_read = 5.0;    // per weight word fetched
  double e_mac = 1.0;          // per multiply-accumulate
  double e_cmac = 0.3;         // per constant multiply
  double e_popcnt_bit = 0.05;  // per input bit counted
  double e_adder = 0.2;        // per adder-tree node event
  double e_leak_per_area_cycle = 0.8;
  double area_unit = 1.0;      // area of the MA baseline SRAM

  void validate() const;
};

struct MethodologyReport {
  Methodology methodology;
  std::int64_t cycles = 0;
  double energy = 0.0;
  double area = 0.0;
};

inline constexpr double kAreaRatioCellEmbedding = 14.3;
inline constexpr double kAreaRatioMacArray = 1.0;
inline constexpr double kAreaRatioMetalEmbedding = 0.95;

std::array<MethodologyReport, 3> compare_methodologies(
    int n_inputs, int n_outputs, int bit_width,
    const MethodologyCostParams& params);

}  // namespace hnlpu
