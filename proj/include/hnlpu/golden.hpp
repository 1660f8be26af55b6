#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hnlpu/numerics.hpp"

namespace hnlpu {

/// Transformer dimensions plus the fixed 4x4 chip grid the sharding assumes.
/// validate() enforces the divisibility the grid mapping needs.
struct ModelConfig {
  int hidden = 2880;
  int layers = 36;
  int q_heads = 64;
  int kv_heads = 8;
  int head_dim = 64;
  int experts = 128;
  int top_k = 4;
  int expert_inner = 2880;
  int vocab = 201088;
  int grid_rows = 4;
  int grid_cols = 4;
  int activation_bits = 8;
  bool rope = true;
  double rope_base = 10000.0;
  double rms_eps = 1e-5;

  void validate() const;
  int q_width() const { return q_heads * head_dim; }
  int kv_width() const { return kv_heads * head_dim; }
  int group_size() const { return q_heads / kv_heads; }

  /// Smallest configuration satisfying every divisibility constraint;
  /// the default fixture for equivalence tests.
  static ModelConfig toy();
  /// gpt-oss 120B dimensions; used for shape audits, never materialized.
  static ModelConfig gpt_oss_120b();
};

struct ExpertWeights {
  Fp4Matrix up;    // (hidden, expert_inner)
  Fp4Matrix gate;  // (hidden, expert_inner)
  Fp4Matrix down;  // (expert_inner, hidden)
};

struct LayerWeights {
  Fp4Matrix wq;     // (hidden, q_heads*head_dim)
  Fp4Matrix wk;     // (hidden, kv_heads*head_dim)
  Fp4Matrix wv;     // (hidden, kv_heads*head_dim)
  Fp4Matrix wo;     // (q_heads*head_dim, hidden)
  Fp4Matrix wrout;  // (hidden, experts)
  std::vector<ExpertWeights> experts;
  std::vector<double> attn_gain;  // pre-attention rmsnorm gain
  std::vector<double> moe_gain;   // pre-router rmsnorm gain
};

struct GoldenModel {
  ModelConfig cfg;
  std::vector<LayerWeights> layers;
  std::vector<double> embedding;    // (vocab, hidden) row-major, HBM-resident
  std::vector<double> unembedding;  // (hidden, vocab) row-major, HBM-resident
};

/// Reproducible pseudo-random weights for a config. All per-tensor scales
/// are powers of two, which keeps every dequantized dot product exact in
/// double precision.
GoldenModel make_random_model(const ModelConfig& cfg, std::uint64_t seed);

/// Binary weight container (codes + scales + dense embedding tables).
void save_model(const GoldenModel& model, const std::string& path);
GoldenModel load_model(const std::string& path);

struct KvLayerCache {
  std::vector<std::vector<double>> k;  // per position, kv_heads*head_dim
  std::vector<std::vector<double>> v;
};

struct KvCache {
  std::vector<KvLayerCache> layers;
  int positions() const {
    return layers.empty() ? 0 : static_cast<int>(layers[0].k.size());
  }
};

KvCache make_kv_cache(const ModelConfig& cfg);

std::vector<double> rmsnorm(std::span<const double> x,
                            std::span<const double> gain, double eps);

/// Hardwired matrix-vector product: quantizes x with a dynamic power-of-two
/// per-tensor scale, runs exact integer dot products against the FP4 codes,
/// and dequantizes once. block_count > 1 quantizes contiguous input blocks
/// independently, mirroring the per-column-group serialization of the chip
/// grid; results stay exact either way.
std::vector<double> quantized_matvec(std::span<const double> x,
                                     const Fp4Matrix& w, int bit_width,
                                     int block_count = 1);

/// Rotary embedding over consecutive (2i, 2i+1) pairs of every head.
void apply_rope(std::span<double> heads, int head_dim, int position,
                double base);

/// Merges two (running max, rescaled exp-sum) softmax fragments. The exact
/// operation sequence is shared between the reference attention and the
/// column reduction so both paths produce bit-identical statistics.
inline void softmax_merge(double& m_acc, double& s_acc, double m, double s) {
  const double merged_max = std::max(m_acc, m);
  double merged_sum = 0.0;
  if (s_acc != 0.0) merged_sum += s_acc * std::exp(m_acc - merged_max);
  if (s != 0.0) merged_sum += s * std::exp(m - merged_max);
  m_acc = merged_max;
  s_acc = merged_sum;
}

/// Pre-norm grouped-query attention with output projection and residual:
/// appends this token's K/V to the cache and returns X_o = x + attn.
///
/// Softmax statistics and the V accumulation follow the sequence-sharded
/// order of the chip grid (positions grouped by p mod 4, fragments merged
/// in ascending group order). The result is within ordinary rounding of the
/// textbook formula, and the pinned order makes the attention output
/// bit-identical to the distributed path, so the downstream activation
/// re-serialization quantizes the same integers on both.
std::vector<double> gqa_block(const ModelConfig& cfg, const LayerWeights& w,
                              std::span<const double> x, KvLayerCache& cache);

struct TopKResult {
  std::vector<int> experts;      // ascending expert index
  std::vector<double> weights;   // softmax over the selected logits
};

/// Top-k selection with ties broken toward the lower expert index.
TopKResult route_top_k(std::span<const double> logits, int k);

/// Router + SwiGLU experts + residual: returns Y = x_o + mixture.
std::vector<double> moe_block(const ModelConfig& cfg, const LayerWeights& w,
                              std::span<const double> x_o);

/// Dense unembedding projection of a final activation to vocab logits.
std::vector<double> unembed(const GoldenModel& model,
                            std::span<const double> x);

/// Embedding lookup, all transformer blocks, unembedding. Extends the cache
/// by one position per layer. layer_outputs, when given, collects each
/// block's output activation.
std::vector<double> forward_token(
    const GoldenModel& model, int token, KvCache& cache,
    std::vector<std::vector<double>>* layer_outputs = nullptr);

int sample_greedy(std::span<const double> logits);

/// Softmax(logits / temperature) sampling with a fully specified generator,
/// reproducible across runs and platforms.
int sample_multinomial(std::span<const double> logits, double temperature,
                       std::uint64_t seed);

}  // namespace hnlpu
