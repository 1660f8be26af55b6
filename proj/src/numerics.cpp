#include "hnlpu/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace hnlpu {

Fp4Code Fp4Code::encode(double x) {
  // 16 candidates; nearest wins, ties go to the smaller magnitude. Scanning
  // +0 first and preferring strict improvement makes -0 unreachable.
  Fp4Code best(0);
  double best_err = std::abs(x);
  for (int c = 1; c < kFp4CodeCount; ++c) {
    Fp4Code cand(static_cast<std::uint8_t>(c));
    double err = std::abs(x - cand.value());
    if (err < best_err ||
        (err == best_err &&
         std::abs(cand.value()) < std::abs(best.value()))) {
      best = cand;
      best_err = err;
    }
  }
  return best;
}

IntActivationVector quantize_activations(std::span<const double> xs,
                                         int bit_width, double scale) {
  if (bit_width < kMinActivationBits || bit_width > kMaxActivationBits) {
    throw std::invalid_argument("quantize_activations: bit width must be in [2, 30]");
  }
  if (!(scale > 0.0)) {
    throw std::invalid_argument("quantize_activations: scale must be positive");
  }
  const double lo = -std::ldexp(1.0, bit_width - 1);
  const double hi = std::ldexp(1.0, bit_width - 1) - 1.0;
  IntActivationVector out;
  out.bit_width = bit_width;
  out.scale = scale;
  out.values.reserve(xs.size());
  for (double x : xs) {
    double r = std::round(x / scale);  // round halves away from zero
    if (r < lo) r = lo;
    if (r > hi) r = hi;
    out.values.push_back(static_cast<std::int32_t>(r));
  }
  return out;
}

double choose_pow2_scale(std::span<const double> xs, int bit_width) {
  double max_abs = 0.0;
  for (double x : xs) max_abs = std::max(max_abs, std::abs(x));
  if (max_abs == 0.0) return 1.0;
  const double limit = std::ldexp(1.0, bit_width - 1) - 1.0;
  int k = 0;
  std::frexp(max_abs / limit, &k);  // 2^(k-1) <= max_abs/limit < 2^k
  while (max_abs / std::ldexp(1.0, k) > limit) ++k;
  while (k > -1022 && max_abs / std::ldexp(1.0, k - 1) <= limit) --k;
  return std::ldexp(1.0, k);
}

std::vector<BitPlane> bit_planes(const IntActivationVector& v) {
  const int b = v.bit_width;
  std::vector<BitPlane> planes(b);
  for (int t = 0; t < b; ++t) {
    planes[t].index = t;
    planes[t].weight = (t == b - 1) ? -(std::int64_t{1} << t)
                                    : (std::int64_t{1} << t);
    planes[t].bits.resize(v.values.size());
  }
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    auto u = static_cast<std::uint32_t>(v.values[i]);  // two's complement bits
    for (int t = 0; t < b; ++t) {
      planes[t].bits[i] = static_cast<std::uint8_t>((u >> t) & 1u);
    }
  }
  return planes;
}

}  // namespace hnlpu
