#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hnlpu/fabric.hpp"
#include "hnlpu/golden.hpp"
#include "hnlpu/hn.hpp"

namespace hnlpu {

/// Per-chip compute activity counters.
struct ChipCounters {
  std::uint64_t hn_evals = 0;  // hardwired neuron outputs produced
  std::uint64_t vex_ops = 0;   // vector-unit scalar operations
};

struct ExpertShard {
  int global_index = 0;
  HardwiredMatrix up;
  HardwiredMatrix gate;
  HardwiredMatrix down;
};

/// Hardwired weights resident on one chip for one layer. Chip (r, c) holds
/// the r-th input slice of the c-th head-block of Wq/Wk/Wv, the Wo tile
/// (head block c rows, output slice r columns), a full router replica, and
/// experts/16 full expert matrices.
struct ChipLayerShard {
  HardwiredMatrix wq;  // (hidden/4, q_width/4)
  HardwiredMatrix wk;  // (hidden/4, kv_width/4)
  HardwiredMatrix wv;  // (hidden/4, kv_width/4)
  HardwiredMatrix wo;  // (q_width/4, hidden/4)
  HardwiredMatrix wrout;  // replicated (hidden, experts)
  std::vector<ExpertShard> experts;
};

struct LayerShards {
  std::array<ChipLayerShard, kGridChips> chips;
  std::vector<double> attn_gain;
  std::vector<double> moe_gain;
};

struct ShardedModel {
  ModelConfig cfg;
  SlicePolicy slice_policy;
  std::vector<LayerShards> layers;
  // embedding tables live in chip 0's HBM
  const GoldenModel* source = nullptr;
};

/// Partitions every weight matrix across the 4x4 grid and hardwires the
/// slices. The golden model must outlive the resulting sharded model.
ShardedModel shard_model(const GoldenModel& model,
                         SlicePolicy policy = SlicePolicy{});

/// Collects one chip's slice codes back into full-matrix positions; used to
/// verify that resharding is the exact inverse of partitioning.
Fp4Matrix reassemble_wq(const ShardedModel& sharded, int layer);
Fp4Matrix reassemble_wo(const ShardedModel& sharded, int layer);

/// Sequence-sharded KV storage: position p of every column's head block is
/// owned by the row (p mod 4) chip of that column.
struct KvShard {
  // indexed [position_ordinal]; each entry is kv_block_heads * head_dim
  std::vector<std::vector<double>> k;
  std::vector<std::vector<double>> v;
};

struct ShardedKvCache {
  // indexed [layer][chip id]
  std::vector<std::array<KvShard, kGridChips>> layers;
  /// Positions cached so far in one layer (row shards of any column sum to
  /// the sequence length seen by that layer).
  int layer_positions(int layer) const;
};

ShardedKvCache make_sharded_cache(const ModelConfig& cfg);

/// Gathers one layer's shards back into per-position K/V vectors matching
/// the golden cache layout exactly.
KvLayerCache gather_cache(const ShardedKvCache& cache, const ModelConfig& cfg,
                          int layer);

struct DistributedBlockResult {
  std::vector<double> y;  // identical on all 16 chips
  std::array<ChipCounters, kGridChips> counters;
};

/// Intermediate tensors of one distributed block. Tensors documented as
/// replicated are stored once; every chip's copy is identical by
/// construction of the fabric collectives.
struct BlockState {
  std::vector<double> x;    // block input, replicated on all chips
  int position = 0;         // sequence position of this token
  IntActivationVector xq;   // serialized post-norm activations
  std::array<std::vector<double>, kGridCols> q_col;  // per-column Q, replicated
  std::array<std::vector<double>, kGridCols> o_col;  // per-column attention out
  std::vector<double> x_o;  // post-projection residual sum, replicated
  std::array<Payload, kGridChips> moe_partials;      // per-chip expert output
  std::vector<double> y;    // block output, replicated
  std::array<ChipCounters, kGridChips> counters;
};

/// (II)+(III): norm + serialize, per-chip partial QKV, column reduces; the
/// new K/V head lands at the (position mod 4) row owner and is appended.
void step_qkv(const ShardedModel& model, int layer, BlockState& state,
              ShardedKvCache& cache, Fabric& fabric);

/// (IV)+(V): local logits over owned positions, column all-reduce of
/// (max, exp-sum) pairs, fragment-local normalization, partial O, column
/// all-reduce of the partials.
void step_attention(const ShardedModel& model, int layer, BlockState& state,
                    const ShardedKvCache& cache, Fabric& fabric);

/// (VI): per-chip Wo tile product, row all-reduce, column all-gather,
/// residual add; X_o replicated everywhere.
void step_output_projection(const ShardedModel& model, int layer,
                            BlockState& state, Fabric& fabric);

/// (VII)-(IX): replicated router, owned experts, grid all-reduce, residual.
void step_moe(const ShardedModel& model, int layer, BlockState& state,
              Fabric& fabric);

/// Executes one transformer block across the grid: QKV projection with
/// column reduces, distributed flash-style attention over the KV shards,
/// output projection via row all-reduce + column all-gather, then routed
/// experts merged by a grid-wide all-reduce. Residuals match the golden
/// block bit for bit on the integer paths.
DistributedBlockResult run_block(const ShardedModel& model, int layer,
                                 std::span<const double> x,
                                 ShardedKvCache& cache, Fabric& fabric);

struct TokenResult {
  std::vector<double> logits;
  std::array<ChipCounters, kGridChips> counters;
  std::vector<std::vector<double>> layer_outputs;
};

/// Embedding fetch on chip 0 + grid broadcast, all layers, unembedding on
/// chip 0. Collects per-layer outputs and leaves collective traces in the
/// fabric.
TokenResult run_token(const ShardedModel& model, int token,
                      ShardedKvCache& cache, Fabric& fabric);

/// Expected tensor shapes of the grid mapping for a config; pure metadata
/// used to audit full-scale dimensions without materializing weights.
struct ShardShapes {
  std::array<int, 2> wq_slice;       // (hidden/4, q_width/4)
  std::array<int, 2> wk_slice;       // (hidden/4, kv_width/4)
  std::array<int, 2> wo_slice;       // (q_width/4, hidden/4)
  std::array<int, 3> column_q;       // (kv_heads/4, group, head_dim)
  std::array<int, 2> new_kv_head;    // (kv_heads/4, head_dim)
  std::array<int, 2> wo_partial;     // (1, hidden/4)
  int experts_per_chip;
  /// cached K per chip at context length ell: (kv_heads/4, head_dim, ~ell/4)
  std::array<int, 3> cached_k(int ell) const;
};

ShardShapes shard_shapes(const ModelConfig& cfg);

/// Per-link byte total of all collectives issued for one decoded token,
/// computed from the trace stream.
std::uint64_t decode_token_bytes(const Fabric& fabric);

}  // namespace hnlpu
