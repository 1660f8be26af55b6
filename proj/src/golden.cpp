#include "hnlpu/golden.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace hnlpu {

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("ModelConfig: ") + what);
  };
  require(grid_rows == 4 && grid_cols == 4, "grid must be 4x4");
  require(hidden > 0 && layers >= 0 && vocab > 0, "dimensions must be positive");
  require(q_heads > 0 && kv_heads > 0 && head_dim > 0, "head shape must be positive");
  require(experts > 0 && top_k > 0 && top_k <= experts, "bad expert counts");
  require(expert_inner > 0, "expert_inner must be positive");
  require(hidden % grid_cols == 0, "hidden not divisible by grid columns");
  require(q_heads % grid_cols == 0, "q_heads not divisible by grid columns");
  require(kv_heads % grid_cols == 0, "kv_heads not divisible by grid columns");
  require(experts % (grid_rows * grid_cols) == 0,
          "experts not divisible by chip count");
  require(q_heads % kv_heads == 0, "q_heads not divisible by kv_heads");
  require(head_dim % 2 == 0, "head_dim must be even for rotary pairs");
  require(activation_bits >= kMinActivationBits &&
              activation_bits <= kMaxActivationBits,
          "activation bits out of range");
}

ModelConfig ModelConfig::toy() {
  ModelConfig cfg;
  cfg.hidden = 16;
  cfg.layers = 2;
  cfg.q_heads = 8;
  cfg.kv_heads = 4;
  cfg.head_dim = 4;
  cfg.experts = 16;
  cfg.top_k = 2;
  cfg.expert_inner = 16;
  cfg.vocab = 64;
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::gpt_oss_120b() {
  ModelConfig cfg;  // defaults are already the full-scale dimensions
  cfg.validate();
  return cfg;
}

namespace {

// Deterministic helpers over the fully specified mt19937_64 stream.
double rand_u01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

std::uint8_t rand_code(std::mt19937_64& gen) {
  return static_cast<std::uint8_t>(gen() >> 60);
}

Fp4Matrix random_matrix(std::mt19937_64& gen, int rows, int cols,
                        double scale) {
  Fp4Matrix m;
  m.rows = rows;
  m.cols = cols;
  m.scale = scale;
  m.codes.resize(static_cast<std::size_t>(rows) * cols);
  for (auto& c : m.codes) c = rand_code(gen);
  return m;
}

std::vector<double> random_gain(std::mt19937_64& gen, int n) {
  std::vector<double> g(n);
  for (auto& v : g) v = 0.9 + 0.2 * rand_u01(gen);
  return g;
}

double silu(double z) { return z / (1.0 + std::exp(-z)); }

}  // namespace

GoldenModel make_random_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  GoldenModel model;
  model.cfg = cfg;
  std::mt19937_64 gen(seed);
  const double ws = 0x1.0p-4;       // projection weight scale
  const double ws_down = 0x1.0p-5;  // contraction weight scale
  model.layers.reserve(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    LayerWeights lw;
    lw.wq = random_matrix(gen, cfg.hidden, cfg.q_width(), ws);
    lw.wk = random_matrix(gen, cfg.hidden, cfg.kv_width(), ws);
    lw.wv = random_matrix(gen, cfg.hidden, cfg.kv_width(), ws);
    lw.wo = random_matrix(gen, cfg.q_width(), cfg.hidden, ws_down);
    lw.wrout = random_matrix(gen, cfg.hidden, cfg.experts, ws);
    lw.experts.reserve(cfg.experts);
    for (int e = 0; e < cfg.experts; ++e) {
      ExpertWeights ew;
      ew.up = random_matrix(gen, cfg.hidden, cfg.expert_inner, ws);
      ew.gate = random_matrix(gen, cfg.hidden, cfg.expert_inner, ws);
      ew.down = random_matrix(gen, cfg.expert_inner, cfg.hidden, ws_down);
      lw.experts.push_back(std::move(ew));
    }
    lw.attn_gain = random_gain(gen, cfg.hidden);
    lw.moe_gain = random_gain(gen, cfg.hidden);
    model.layers.push_back(std::move(lw));
  }
  model.embedding.resize(static_cast<std::size_t>(cfg.vocab) * cfg.hidden);
  for (auto& v : model.embedding) v = 2.0 * rand_u01(gen) - 1.0;
  model.unembedding.resize(static_cast<std::size_t>(cfg.hidden) * cfg.vocab);
  for (auto& v : model.unembedding) v = 2.0 * rand_u01(gen) - 1.0;
  return model;
}

namespace {

constexpr char kMagic[4] = {'H', 'N', 'W', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("weight container: truncated file");
  return v;
}

void write_matrix(std::ostream& os, const Fp4Matrix& m) {
  write_pod<std::int32_t>(os, m.rows);
  write_pod<std::int32_t>(os, m.cols);
  write_pod<double>(os, m.scale);
  os.write(reinterpret_cast<const char*>(m.codes.data()),
           static_cast<std::streamsize>(m.codes.size()));
}

Fp4Matrix read_matrix(std::istream& is) {
  Fp4Matrix m;
  m.rows = read_pod<std::int32_t>(is);
  m.cols = read_pod<std::int32_t>(is);
  m.scale = read_pod<double>(is);
  if (m.rows < 0 || m.cols < 0) {
    throw std::runtime_error("weight container: negative matrix shape");
  }
  m.codes.resize(static_cast<std::size_t>(m.rows) * m.cols);
  is.read(reinterpret_cast<char*>(m.codes.data()),
          static_cast<std::streamsize>(m.codes.size()));
  if (!is) throw std::runtime_error("weight container: truncated codes");
  return m;
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
  write_pod<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& is) {
  auto n = read_pod<std::uint64_t>(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("weight container: truncated doubles");
  return v;
}

}  // namespace

void save_model(const GoldenModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(kMagic, 4);
  const ModelConfig& c = model.cfg;
  for (int v : {c.hidden, c.layers, c.q_heads, c.kv_heads, c.head_dim,
                c.experts, c.top_k, c.expert_inner, c.vocab,
                c.activation_bits, c.rope ? 1 : 0}) {
    write_pod<std::int32_t>(os, v);
  }
  write_pod<double>(os, c.rope_base);
  write_pod<double>(os, c.rms_eps);
  for (const LayerWeights& lw : model.layers) {
    write_matrix(os, lw.wq);
    write_matrix(os, lw.wk);
    write_matrix(os, lw.wv);
    write_matrix(os, lw.wo);
    write_matrix(os, lw.wrout);
    for (const ExpertWeights& ew : lw.experts) {
      write_matrix(os, ew.up);
      write_matrix(os, ew.gate);
      write_matrix(os, ew.down);
    }
    write_doubles(os, lw.attn_gain);
    write_doubles(os, lw.moe_gain);
  }
  write_doubles(os, model.embedding);
  write_doubles(os, model.unembedding);
  if (!os) throw std::runtime_error("write failed: " + path);
}

GoldenModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not a weight container: " + path);
  }
  GoldenModel model;
  ModelConfig& c = model.cfg;
  c.hidden = read_pod<std::int32_t>(is);
  c.layers = read_pod<std::int32_t>(is);
  c.q_heads = read_pod<std::int32_t>(is);
  c.kv_heads = read_pod<std::int32_t>(is);
  c.head_dim = read_pod<std::int32_t>(is);
  c.experts = read_pod<std::int32_t>(is);
  c.top_k = read_pod<std::int32_t>(is);
  c.expert_inner = read_pod<std::int32_t>(is);
  c.vocab = read_pod<std::int32_t>(is);
  c.activation_bits = read_pod<std::int32_t>(is);
  c.rope = read_pod<std::int32_t>(is) != 0;
  c.rope_base = read_pod<double>(is);
  c.rms_eps = read_pod<double>(is);
  c.validate();
  model.layers.resize(c.layers);
  for (LayerWeights& lw : model.layers) {
    lw.wq = read_matrix(is);
    lw.wk = read_matrix(is);
    lw.wv = read_matrix(is);
    lw.wo = read_matrix(is);
    lw.wrout = read_matrix(is);
    lw.experts.resize(c.experts);
    for (ExpertWeights& ew : lw.experts) {
      ew.up = read_matrix(is);
      ew.gate = read_matrix(is);
      ew.down = read_matrix(is);
    }
    lw.attn_gain = read_doubles(is);
    lw.moe_gain = read_doubles(is);
  }
  model.embedding = read_doubles(is);
  model.unembedding = read_doubles(is);
  return model;
}

KvCache make_kv_cache(const ModelConfig& cfg) {
  KvCache cache;
  cache.layers.resize(cfg.layers);
  return cache;
}

std::vector<double> rmsnorm(std::span<const double> x,
                            std::span<const double> gain, double eps) {
  if (x.size() != gain.size()) {
    throw std::invalid_argument("rmsnorm: length mismatch");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("rmsnorm: eps must be positive");
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(ms + eps);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * gain[i] * inv;
  return out;
}

std::vector<double> quantized_matvec(std::span<const double> x,
                                     const Fp4Matrix& w, int bit_width,
                                     int block_count) {
  if (static_cast<int>(x.size()) != w.rows) {
    throw std::invalid_argument("quantized_matvec: input length mismatch");
  }
  if (block_count < 1 || w.rows % block_count != 0) {
    throw std::invalid_argument("quantized_matvec: bad block count");
  }
  const int block = w.rows / block_count;
  std::vector<double> y(w.cols, 0.0);
  for (int b = 0; b < block_count; ++b) {
    auto xs = x.subspan(static_cast<std::size_t>(b) * block, block);
    IntActivationVector q =
        quantize_activations(xs, bit_width, choose_pow2_scale(xs, bit_width));
    for (int j = 0; j < w.cols; ++j) {
      std::int64_t acc = 0;
      const std::uint8_t* col0 =
          w.codes.data() + static_cast<std::size_t>(b) * block * w.cols + j;
      for (int i = 0; i < block; ++i) {
        acc += static_cast<std::int64_t>(
                   Fp4Code(col0[static_cast<std::size_t>(i) * w.cols]).scaled_int()) *
               q.values[i];
      }
      y[j] += static_cast<double>(acc) * q.scale * w.scale / 2.0;
    }
  }
  return y;
}

void apply_rope(std::span<double> heads, int head_dim, int position,
                double base) {
  const int n_heads = static_cast<int>(heads.size()) / head_dim;
  for (int h = 0; h < n_heads; ++h) {
    double* head = heads.data() + static_cast<std::size_t>(h) * head_dim;
    for (int i = 0; i < head_dim / 2; ++i) {
      const double theta =
          position * std::pow(base, -2.0 * i / static_cast<double>(head_dim));
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      const double a = head[2 * i];
      const double b = head[2 * i + 1];
      head[2 * i] = a * c - b * s;
      head[2 * i + 1] = a * s + b * c;
    }
  }
}

std::vector<double> gqa_block(const ModelConfig& cfg, const LayerWeights& w,
                              std::span<const double> x, KvLayerCache& cache) {
  if (static_cast<int>(x.size()) != cfg.hidden) {
    throw std::invalid_argument("gqa_block: input shape mismatch");
  }
  if (cache.k.size() != cache.v.size()) {
    throw std::invalid_argument("gqa_block: inconsistent kv cache");
  }
  const int position = static_cast<int>(cache.k.size());
  std::vector<double> xn = rmsnorm(x, w.attn_gain, cfg.rms_eps);
  std::vector<double> q = quantized_matvec(xn, w.wq, cfg.activation_bits);
  std::vector<double> k_new = quantized_matvec(xn, w.wk, cfg.activation_bits);
  std::vector<double> v_new = quantized_matvec(xn, w.wv, cfg.activation_bits);
  if (cfg.rope) {
    apply_rope(q, cfg.head_dim, position, cfg.rope_base);
    apply_rope(k_new, cfg.head_dim, position, cfg.rope_base);
  }
  cache.k.push_back(std::move(k_new));
  cache.v.push_back(std::move(v_new));

  const int ell = static_cast<int>(cache.k.size());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  std::vector<double> o(cfg.q_width(), 0.0);
  std::vector<double> logits(ell);
  for (int h = 0; h < cfg.q_heads; ++h) {
    const int g = h / cfg.group_size();
    const double* qh = q.data() + static_cast<std::size_t>(h) * cfg.head_dim;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < ell; ++j) {
      const double* kj =
          cache.k[j].data() + static_cast<std::size_t>(g) * cfg.head_dim;
      double dot = 0.0;
      for (int d = 0; d < cfg.head_dim; ++d) dot += qh[d] * kj[d];
      logits[j] = dot * inv_sqrt_d;
      max_logit = std::max(max_logit, logits[j]);
    }
    double denom = 0.0;
    for (int j = 0; j < ell; ++j) denom += std::exp(logits[j] - max_logit);
    double* oh = o.data() + static_cast<std::size_t>(h) * cfg.head_dim;
    for (int j = 0; j < ell; ++j) {
      const double p = std::exp(logits[j] - max_logit) / denom;
      const double* vj =
          cache.v[j].data() + static_cast<std::size_t>(g) * cfg.head_dim;
      for (int d = 0; d < cfg.head_dim; ++d) oh[d] += p * vj[d];
    }
  }

  // The output projection input is serialized per column group on the grid;
  // quantize per block so both execution paths see identical integers.
  std::vector<double> attn =
      quantized_matvec(o, w.wo, cfg.activation_bits, cfg.grid_cols);
  std::vector<double> x_o(x.begin(), x.end());
  for (int i = 0; i < cfg.hidden; ++i) x_o[i] += attn[i];
  return x_o;
}

TopKResult route_top_k(std::span<const double> logits, int k) {
  if (k < 1 || k > static_cast<int>(logits.size())) {
    throw std::invalid_argument("route_top_k: k out of range");
  }
  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (logits[a] != logits[b]) return logits[a] > logits[b];
    return a < b;
  });
  TopKResult result;
  result.experts.assign(order.begin(), order.begin() + k);
  std::sort(result.experts.begin(), result.experts.end());
  double max_sel = -std::numeric_limits<double>::infinity();
  for (int e : result.experts) max_sel = std::max(max_sel, logits[e]);
  double denom = 0.0;
  for (int e : result.experts) denom += std::exp(logits[e] - max_sel);
  result.weights.reserve(k);
  for (int e : result.experts) {
    result.weights.push_back(std::exp(logits[e] - max_sel) / denom);
  }
  return result;
}

std::vector<double> moe_block(const ModelConfig& cfg, const LayerWeights& w,
                              std::span<const double> x_o) {
  if (static_cast<int>(x_o.size()) != cfg.hidden) {
    throw std::invalid_argument("moe_block: input shape mismatch");
  }
  std::vector<double> xn = rmsnorm(x_o, w.moe_gain, cfg.rms_eps);
  std::vector<double> router_logits =
      quantized_matvec(xn, w.wrout, cfg.activation_bits);
  TopKResult routed = route_top_k(router_logits, cfg.top_k);

  std::vector<double> mix(cfg.hidden, 0.0);
  for (int s = 0; s < cfg.top_k; ++s) {
    const ExpertWeights& ew = w.experts[routed.experts[s]];
    std::vector<double> up = quantized_matvec(xn, ew.up, cfg.activation_bits);
    std::vector<double> gate = quantized_matvec(xn, ew.gate, cfg.activation_bits);
    std::vector<double> t(cfg.expert_inner);
    for (int i = 0; i < cfg.expert_inner; ++i) t[i] = silu(gate[i]) * up[i];
    std::vector<double> down = quantized_matvec(t, ew.down, cfg.activation_bits);
    for (int i = 0; i < cfg.hidden; ++i) mix[i] += routed.weights[s] * down[i];
  }
  std::vector<double> y(x_o.begin(), x_o.end());
  for (int i = 0; i < cfg.hidden; ++i) y[i] += mix[i];
  return y;
}

std::vector<double> unembed(const GoldenModel& model,
                            std::span<const double> x) {
  const ModelConfig& cfg = model.cfg;
  if (static_cast<int>(x.size()) != cfg.hidden) {
    throw std::invalid_argument("unembed: input shape mismatch");
  }
  std::vector<double> logits(cfg.vocab, 0.0);
  for (int h = 0; h < cfg.hidden; ++h) {
    const double xv = x[h];
    const double* row =
        model.unembedding.data() + static_cast<std::size_t>(h) * cfg.vocab;
    for (int v = 0; v < cfg.vocab; ++v) logits[v] += xv * row[v];
  }
  return logits;
}

std::vector<double> forward_token(
    const GoldenModel& model, int token, KvCache& cache,
    std::vector<std::vector<double>>* layer_outputs) {
  const ModelConfig& cfg = model.cfg;
  if (token < 0 || token >= cfg.vocab) {
    throw std::invalid_argument("forward_token: token outside vocabulary");
  }
  if (static_cast<int>(cache.layers.size()) != cfg.layers) {
    throw std::invalid_argument("forward_token: cache layer count mismatch");
  }
  std::vector<double> x(
      model.embedding.begin() + static_cast<std::size_t>(token) * cfg.hidden,
      model.embedding.begin() + static_cast<std::size_t>(token + 1) * cfg.hidden);
  for (int l = 0; l < cfg.layers; ++l) {
    std::vector<double> x_o = gqa_block(cfg, model.layers[l], x, cache.layers[l]);
    x = moe_block(cfg, model.layers[l], x_o);
    if (layer_outputs) layer_outputs->push_back(x);
  }
  return unembed(model, x);
}

int sample_greedy(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("sample: empty logits");
  int best = 0;
  for (int i = 1; i < static_cast<int>(logits.size()); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

int sample_multinomial(std::span<const double> logits, double temperature,
                       std::uint64_t seed) {
  if (logits.empty()) throw std::invalid_argument("sample: empty logits");
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("sample: temperature must be positive");
  }
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument("sample: non-finite logit");
    max_logit = std::max(max_logit, v / temperature);
  }
  std::vector<double> p(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] / temperature - max_logit);
    denom += p[i];
  }
  std::mt19937_64 gen(seed);
  const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53 * denom;
  double cdf = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cdf += p[i];
    if (u < cdf) return static_cast<int>(i);
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace hnlpu
