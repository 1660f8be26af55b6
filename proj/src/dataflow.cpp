#include "hnlpu/dataflow.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hnlpu {

namespace {

Fp4Matrix submatrix(const Fp4Matrix& m, int r0, int r1, int c0, int c1) {
  Fp4Matrix out;
  out.rows = r1 - r0;
  out.cols = c1 - c0;
  out.scale = m.scale;
  out.codes.reserve(static_cast<std::size_t>(out.rows) * out.cols);
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) {
      out.codes.push_back(m.codes[static_cast<std::size_t>(r) * m.cols + c]);
    }
  }
  return out;
}

/// (max, rescaled exp-sum) pairs merged FlashAttention-style.
Combine logsumexp_combine() {
  return [](Payload& acc, const Payload& next) {
    for (std::size_t i = 0; i < acc.size(); i += 2) {
      const double m1 = acc[i], s1 = acc[i + 1];
      const double m2 = next[i], s2 = next[i + 1];
      const double m = std::max(m1, m2);
      double s = 0.0;
      if (s1 != 0.0) s += s1 * std::exp(m1 - m);
      if (s2 != 0.0) s += s2 * std::exp(m2 - m);
      acc[i] = m;
      acc[i + 1] = s;
    }
  };
}

IntActivationVector slice_acts(const IntActivationVector& full, int begin,
                               int count) {
  IntActivationVector out;
  out.bit_width = full.bit_width;
  out.scale = full.scale;
  out.values.assign(full.values.begin() + begin,
                    full.values.begin() + begin + count);
  return out;
}

}  // namespace

ShardedModel shard_model(const GoldenModel& model, SlicePolicy policy) {
  const ModelConfig& cfg = model.cfg;
  cfg.validate();
  ShardedModel sharded;
  sharded.cfg = cfg;
  sharded.slice_policy = policy;
  sharded.source = &model;
  const int h4 = cfg.hidden / kGridCols;
  const int q4 = cfg.q_width() / kGridCols;
  const int kv4 = cfg.kv_width() / kGridCols;
  const int experts_per_chip = cfg.experts / kGridChips;

  sharded.layers.resize(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    const LayerWeights& w = model.layers[l];
    LayerShards& shards = sharded.layers[l];
    shards.attn_gain = w.attn_gain;
    shards.moe_gain = w.moe_gain;
    for (int id = 0; id < kGridChips; ++id) {
      const ChipCoord chip = ChipCoord::from_id(id);
      const int r = chip.row, c = chip.col;
      ChipLayerShard& s = shards.chips[id];
      s.wq = hardwire_matrix(
          submatrix(w.wq, r * h4, (r + 1) * h4, c * q4, (c + 1) * q4), policy);
      s.wk = hardwire_matrix(
          submatrix(w.wk, r * h4, (r + 1) * h4, c * kv4, (c + 1) * kv4), policy);
      s.wv = hardwire_matrix(
          submatrix(w.wv, r * h4, (r + 1) * h4, c * kv4, (c + 1) * kv4), policy);
      // head block c of Wo rows, output slice r of Wo columns
      s.wo = hardwire_matrix(
          submatrix(w.wo, c * q4, (c + 1) * q4, r * h4, (r + 1) * h4), policy);
      s.wrout = hardwire_matrix(w.wrout, policy);
      s.experts.reserve(experts_per_chip);
      for (int e = 0; e < experts_per_chip; ++e) {
        const int global = id * experts_per_chip + e;
        ExpertShard shard;
        shard.global_index = global;
        shard.up = hardwire_matrix(w.experts[global].up, policy);
        shard.gate = hardwire_matrix(w.experts[global].gate, policy);
        shard.down = hardwire_matrix(w.experts[global].down, policy);
        s.experts.push_back(std::move(shard));
      }
    }
  }
  return sharded;
}

Fp4Matrix reassemble_wq(const ShardedModel& sharded, int layer) {
  const ModelConfig& cfg = sharded.cfg;
  const int h4 = cfg.hidden / kGridCols;
  const int q4 = cfg.q_width() / kGridCols;
  Fp4Matrix out;
  out.rows = cfg.hidden;
  out.cols = cfg.q_width();
  out.scale = sharded.layers[layer].chips[0].wq.weight_scale;
  out.codes.assign(static_cast<std::size_t>(out.rows) * out.cols, 0);
  for (int id = 0; id < kGridChips; ++id) {
    const ChipCoord chip = ChipCoord::from_id(id);
    const Fp4Matrix& slice = sharded.layers[layer].chips[id].wq.codes;
    for (int i = 0; i < slice.rows; ++i) {
      for (int j = 0; j < slice.cols; ++j) {
        out.codes[static_cast<std::size_t>(chip.row * h4 + i) * out.cols +
                  chip.col * q4 + j] =
            slice.codes[static_cast<std::size_t>(i) * slice.cols + j];
      }
    }
  }
  return out;
}

Fp4Matrix reassemble_wo(const ShardedModel& sharded, int layer) {
  const ModelConfig& cfg = sharded.cfg;
  const int h4 = cfg.hidden / kGridCols;
  const int q4 = cfg.q_width() / kGridCols;
  Fp4Matrix out;
  out.rows = cfg.q_width();
  out.cols = cfg.hidden;
  out.scale = sharded.layers[layer].chips[0].wo.weight_scale;
  out.codes.assign(static_cast<std::size_t>(out.rows) * out.cols, 0);
  for (int id = 0; id < kGridChips; ++id) {
    const ChipCoord chip = ChipCoord::from_id(id);
    const Fp4Matrix& slice = sharded.layers[layer].chips[id].wo.codes;
    for (int i = 0; i < slice.rows; ++i) {
      for (int j = 0; j < slice.cols; ++j) {
        out.codes[static_cast<std::size_t>(chip.col * q4 + i) * out.cols +
                  chip.row * h4 + j] =
            slice.codes[static_cast<std::size_t>(i) * slice.cols + j];
      }
    }
  }
  return out;
}

ShardedKvCache make_sharded_cache(const ModelConfig& cfg) {
  ShardedKvCache cache;
  cache.layers.resize(cfg.layers);
  return cache;
}

int ShardedKvCache::layer_positions(int layer) const {
  int total = 0;
  for (int r = 0; r < kGridRows; ++r) {
    total += static_cast<int>(layers[layer][ChipCoord{r, 0}.id()].k.size());
  }
  return total;
}

KvLayerCache gather_cache(const ShardedKvCache& cache, const ModelConfig& cfg,
                          int layer) {
  KvLayerCache out;
  const int kvb = cfg.kv_width() / kGridCols;
  const int positions = cache.layer_positions(layer);
  out.k.assign(positions, std::vector<double>(cfg.kv_width(), 0.0));
  out.v.assign(positions, std::vector<double>(cfg.kv_width(), 0.0));
  for (int id = 0; id < kGridChips; ++id) {
    const ChipCoord chip = ChipCoord::from_id(id);
    const KvShard& shard = cache.layers[layer][id];
    for (std::size_t ord = 0; ord < shard.k.size(); ++ord) {
      const int pos = chip.row + kGridRows * static_cast<int>(ord);
      for (int d = 0; d < kvb; ++d) {
        out.k[pos][chip.col * kvb + d] = shard.k[ord][d];
        out.v[pos][chip.col * kvb + d] = shard.v[ord][d];
      }
    }
  }
  return out;
}

void step_qkv(const ShardedModel& model, int layer, BlockState& state,
              ShardedKvCache& cache, Fabric& fabric) {
  const ModelConfig& cfg = model.cfg;
  if (static_cast<int>(state.x.size()) != cfg.hidden) {
    throw std::invalid_argument("step_qkv: input shape mismatch");
  }
  const LayerShards& shards = model.layers[layer];
  const int h4 = cfg.hidden / kGridCols;
  const int q4 = cfg.q_width() / kGridCols;
  const int kv4 = cfg.kv_width() / kGridCols;
  const int hd = cfg.head_dim;
  const int bits = cfg.activation_bits;
  state.position = cache.layer_positions(layer);
  const int owner_row = state.position % kGridRows;
  auto& counters = state.counters;

  // Pre-attention norm; every chip computes the identical replica, then
  // serializes the same quantized vector and takes its row slice.
  std::vector<double> xn = rmsnorm(state.x, shards.attn_gain, cfg.rms_eps);
  state.xq = quantize_activations(xn, bits, choose_pow2_scale(xn, bits));
  for (auto& ctr : counters) ctr.vex_ops += 2 * cfg.hidden;

  std::array<IntActivationVector, kGridRows> x_slices;
  for (int r = 0; r < kGridRows; ++r) {
    x_slices[r] = slice_acts(state.xq, r * h4, h4);
  }

  for (int c = 0; c < kGridCols; ++c) {
    std::array<Payload, kGroupSize> pq, pk, pv;
    for (int r = 0; r < kGridRows; ++r) {
      const ChipLayerShard& chip = shards.chips[ChipCoord{r, c}.id()];
      pq[r] = hn_matvec(chip.wq, x_slices[r]);
      pk[r] = hn_matvec(chip.wk, x_slices[r]);
      pv[r] = hn_matvec(chip.wv, x_slices[r]);
      counters[ChipCoord{r, c}.id()].hn_evals +=
          static_cast<std::uint64_t>(q4) + 2 * kv4;
    }
    state.q_col[c] = fabric.all_reduce4(Group::col(c), pq, sum_combine())[0];
    Payload k_col = fabric.reduce(Group::col(c), owner_row, pk, sum_combine());
    Payload v_col = fabric.reduce(Group::col(c), owner_row, pv, sum_combine());
    if (cfg.rope) {
      apply_rope(state.q_col[c], hd, state.position, cfg.rope_base);
      apply_rope(k_col, hd, state.position, cfg.rope_base);
      for (int r = 0; r < kGridRows; ++r) {
        counters[ChipCoord{r, c}.id()].vex_ops += static_cast<std::uint64_t>(q4);
      }
      counters[ChipCoord{owner_row, c}.id()].vex_ops +=
          static_cast<std::uint64_t>(kv4);
    }
    KvShard& shard = cache.layers[layer][ChipCoord{owner_row, c}.id()];
    shard.k.push_back(std::move(k_col));
    shard.v.push_back(std::move(v_col));
  }
}

void step_attention(const ShardedModel& model, int layer, BlockState& state,
                    const ShardedKvCache& cache, Fabric& fabric) {
  const ModelConfig& cfg = model.cfg;
  const int group = cfg.group_size();
  const int qb_heads = cfg.q_heads / kGridCols;
  const int hd = cfg.head_dim;
  auto& counters = state.counters;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(hd));

  // (IV) Local logits over owned positions; Z stays fragment-local, only
  // the (running max, rescaled exp-sum) pairs cross the column.
  std::array<std::array<std::vector<std::vector<double>>, kGridRows>, kGridCols>
      local_logits;  // [col][row][q head][ordinal]
  std::array<Payload, kGridCols> stats;
  for (int c = 0; c < kGridCols; ++c) {
    std::array<Payload, kGroupSize> chip_stats;
    for (int r = 0; r < kGridRows; ++r) {
      const KvShard& shard = cache.layers[layer][ChipCoord{r, c}.id()];
      auto& logits = local_logits[c][r];
      logits.assign(qb_heads, {});
      chip_stats[r].assign(2 * qb_heads, 0.0);
      for (int qh = 0; qh < qb_heads; ++qh) {
        const int g_local = qh / group;
        const double* qvec =
            state.q_col[c].data() + static_cast<std::size_t>(qh) * hd;
        double m = -std::numeric_limits<double>::infinity();
        logits[qh].resize(shard.k.size());
        for (std::size_t ord = 0; ord < shard.k.size(); ++ord) {
          const double* kvec =
              shard.k[ord].data() + static_cast<std::size_t>(g_local) * hd;
          double dot = 0.0;
          for (int d = 0; d < hd; ++d) dot += qvec[d] * kvec[d];
          logits[qh][ord] = dot * inv_sqrt_d;
          m = std::max(m, logits[qh][ord]);
          counters[ChipCoord{r, c}.id()].vex_ops +=
              static_cast<std::uint64_t>(hd);
        }
        double s = 0.0;
        for (double l : logits[qh]) s += std::exp(l - m);
        chip_stats[r][2 * qh] = m;
        chip_stats[r][2 * qh + 1] = s;
      }
    }
    stats[c] =
        fabric.all_reduce4(Group::col(c), chip_stats, logsumexp_combine())[0];
  }

  // (V) Fragment-local normalization, V weighting, partial-O all-reduce.
  for (int c = 0; c < kGridCols; ++c) {
    std::array<Payload, kGroupSize> partial_o;
    for (int r = 0; r < kGridRows; ++r) {
      const KvShard& shard = cache.layers[layer][ChipCoord{r, c}.id()];
      partial_o[r].assign(static_cast<std::size_t>(qb_heads) * hd, 0.0);
      for (int qh = 0; qh < qb_heads; ++qh) {
        const int g_local = qh / group;
        const double global_max = stats[c][2 * qh];
        const double denom = stats[c][2 * qh + 1];
        for (std::size_t ord = 0; ord < shard.v.size(); ++ord) {
          const double z =
              std::exp(local_logits[c][r][qh][ord] - global_max) / denom;
          const double* vvec =
              shard.v[ord].data() + static_cast<std::size_t>(g_local) * hd;
          for (int d = 0; d < hd; ++d) {
            partial_o[r][static_cast<std::size_t>(qh) * hd + d] += z * vvec[d];
          }
          counters[ChipCoord{r, c}.id()].vex_ops +=
              static_cast<std::uint64_t>(hd) + 1;
        }
      }
    }
    state.o_col[c] =
        fabric.all_reduce4(Group::col(c), partial_o, sum_combine())[0];
  }
}

void step_output_projection(const ShardedModel& model, int layer,
                            BlockState& state, Fabric& fabric) {
  const ModelConfig& cfg = model.cfg;
  const LayerShards& shards = model.layers[layer];
  const int h4 = cfg.hidden / kGridCols;
  const int bits = cfg.activation_bits;
  auto& counters = state.counters;

  // Each column serializes its own flattened O block.
  std::array<IntActivationVector, kGridCols> oq;
  for (int c = 0; c < kGridCols; ++c) {
    oq[c] = quantize_activations(state.o_col[c], bits,
                                 choose_pow2_scale(state.o_col[c], bits));
  }
  std::array<Payload, kGridRows> xo_slice;
  for (int r = 0; r < kGridRows; ++r) {
    std::array<Payload, kGroupSize> partials;
    for (int c = 0; c < kGridCols; ++c) {
      const ChipLayerShard& chip = shards.chips[ChipCoord{r, c}.id()];
      partials[c] = hn_matvec(chip.wo, oq[c]);
      counters[ChipCoord{r, c}.id()].hn_evals += static_cast<std::uint64_t>(h4);
    }
    xo_slice[r] = fabric.all_reduce4(Group::row(r), partials, sum_combine())[0];
  }
  std::array<Payload, kGroupSize> parts;
  for (int r = 0; r < kGridRows; ++r) parts[r] = xo_slice[r];
  state.x_o = fabric.all_gather4(Group::col(0), parts);
  for (int c = 1; c < kGridCols; ++c) {
    fabric.all_gather4(Group::col(c), parts);  // same gather in every column
  }
  for (int i = 0; i < cfg.hidden; ++i) state.x_o[i] += state.x[i];
  for (auto& ctr : counters) ctr.vex_ops += static_cast<std::uint64_t>(cfg.hidden);
}

void step_moe(const ShardedModel& model, int layer, BlockState& state,
              Fabric& fabric) {
  const ModelConfig& cfg = model.cfg;
  const LayerShards& shards = model.layers[layer];
  const int bits = cfg.activation_bits;
  auto& counters = state.counters;

  // (VII) Replicated router; identical decision on every chip.
  std::vector<double> xn = rmsnorm(state.x_o, shards.moe_gain, cfg.rms_eps);
  IntActivationVector xq =
      quantize_activations(xn, bits, choose_pow2_scale(xn, bits));
  std::vector<double> router_logits = hn_matvec(shards.chips[0].wrout, xq);
  for (auto& ctr : counters) {
    ctr.hn_evals += static_cast<std::uint64_t>(cfg.experts);
    ctr.vex_ops += 2 * static_cast<std::uint64_t>(cfg.hidden);
  }
  TopKResult routed = route_top_k(router_logits, cfg.top_k);
  if (static_cast<int>(routed.experts.size()) != cfg.top_k) {
    throw std::logic_error("step_moe: router selected a wrong expert count");
  }

  // (VIII)+(IX) Owned experts produce weighted outputs; grid all-reduce.
  const int experts_per_chip = cfg.experts / kGridChips;
  for (auto& p : state.moe_partials) p.assign(cfg.hidden, 0.0);
  for (int s = 0; s < cfg.top_k; ++s) {
    const int e = routed.experts[s];
    const int owner = e / experts_per_chip;
    const ExpertShard& expert =
        shards.chips[owner].experts[e % experts_per_chip];
    std::vector<double> up = hn_matvec(expert.up, xq);
    std::vector<double> gate = hn_matvec(expert.gate, xq);
    std::vector<double> t(cfg.expert_inner);
    for (int i = 0; i < cfg.expert_inner; ++i) {
      t[i] = gate[i] / (1.0 + std::exp(-gate[i])) * up[i];
    }
    IntActivationVector tq =
        quantize_activations(t, bits, choose_pow2_scale(t, bits));
    std::vector<double> down = hn_matvec(expert.down, tq);
    for (int i = 0; i < cfg.hidden; ++i) {
      state.moe_partials[owner][i] += routed.weights[s] * down[i];
    }
    counters[owner].hn_evals +=
        2 * static_cast<std::uint64_t>(cfg.expert_inner) + cfg.hidden;
    counters[owner].vex_ops += 2 * static_cast<std::uint64_t>(cfg.expert_inner);
  }
  state.y = fabric.all_reduce16(state.moe_partials, sum_combine());
  for (int i = 0; i < cfg.hidden; ++i) state.y[i] += state.x_o[i];
  for (auto& ctr : counters) ctr.vex_ops += static_cast<std::uint64_t>(cfg.hidden);
}

DistributedBlockResult run_block(const ShardedModel& model, int layer,
                                 std::span<const double> x,
                                 ShardedKvCache& cache, Fabric& fabric) {
  BlockState state;
  state.x.assign(x.begin(), x.end());
  step_qkv(model, layer, state, cache, fabric);
  step_attention(model, layer, state, cache, fabric);
  step_output_projection(model, layer, state, fabric);
  step_moe(model, layer, state, fabric);
  DistributedBlockResult result;
  result.y = std::move(state.y);
  result.counters = state.counters;
  return result;
}

TokenResult run_token(const ShardedModel& model, int token,
                      ShardedKvCache& cache, Fabric& fabric) {
  const ModelConfig& cfg = model.cfg;
  const GoldenModel& source = *model.source;
  if (token < 0 || token >= cfg.vocab) {
    throw std::invalid_argument("run_token: token outside vocabulary");
  }
  if (static_cast<int>(cache.layers.size()) != cfg.layers) {
    throw std::invalid_argument("run_token: cache layer count mismatch");
  }
  TokenResult result;
  // Token vector fetched from chip 0's HBM and broadcast to the grid.
  std::vector<double> x(
      source.embedding.begin() + static_cast<std::size_t>(token) * cfg.hidden,
      source.embedding.begin() +
          static_cast<std::size_t>(token + 1) * cfg.hidden);
  x = fabric.all_broadcast16(ChipCoord{0, 0}, x);
  for (int l = 0; l < cfg.layers; ++l) {
    DistributedBlockResult block = run_block(model, l, x, cache, fabric);
    x = std::move(block.y);
    result.layer_outputs.push_back(x);
    for (int id = 0; id < kGridChips; ++id) {
      result.counters[id].hn_evals += block.counters[id].hn_evals;
      result.counters[id].vex_ops += block.counters[id].vex_ops;
    }
  }
  result.logits = unembed(source, x);  // chip 0 holds the unembedding table
  result.counters[0].vex_ops +=
      static_cast<std::uint64_t>(cfg.hidden) * cfg.vocab;
  return result;
}

ShardShapes shard_shapes(const ModelConfig& cfg) {
  cfg.validate();
  ShardShapes s;
  s.wq_slice = {cfg.hidden / kGridCols, cfg.q_width() / kGridCols};
  s.wk_slice = {cfg.hidden / kGridCols, cfg.kv_width() / kGridCols};
  s.wo_slice = {cfg.q_width() / kGridCols, cfg.hidden / kGridCols};
  s.column_q = {cfg.kv_heads / kGridCols, cfg.group_size(), cfg.head_dim};
  s.new_kv_head = {cfg.kv_heads / kGridCols, cfg.head_dim};
  s.wo_partial = {1, cfg.hidden / kGridCols};
  s.experts_per_chip = cfg.experts / kGridChips;
  return s;
}

std::array<int, 3> ShardShapes::cached_k(int ell) const {
  return {new_kv_head[0], new_kv_head[1], ell / kGridRows};
}

std::uint64_t decode_token_bytes(const Fabric& fabric) {
  return fabric.total_bytes();
}

}  // namespace hnlpu
