#include <algorithm>
#include <stdexcept>
#include <cmath>
#include <random>

#include "doctest.h"
#include "hnlpu/numerics.hpp"

using namespace hnlpu;

namespace {

// Independent nearest-with-tie oracle: scan the decoded codebook directly.
double encode_oracle(double x) {
  static const double codebook[] = {0,  0.5,  1,  1.5,  2,  3,  4,  6,
                                    -0.5, -1, -1.5, -2, -3, -4, -6};
  double best = 0.0;
  double best_err = std::abs(x);
  for (double v : codebook) {
    double err = std::abs(x - v);
    if (err < best_err || (err == best_err && std::abs(v) < std::abs(best))) {
      best = v;
      best_err = err;
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("fp4 codebook has 16 codes and exact scaled integers") {
  int zero_codes = 0;
  for (int c = 0; c < kFp4CodeCount; ++c) {
    Fp4Code code(static_cast<std::uint8_t>(c));
    CHECK(code.value() == code.scaled_int() / 2.0);
    CHECK(code.value() * 2.0 == static_cast<double>(code.scaled_int()));
    if (code.value() == 0.0) ++zero_codes;
    // round-trip through encode
    CHECK(Fp4Code::encode(code.value()).value() == code.value());
  }
  CHECK(zero_codes == 2);  // +0 and -0
  CHECK(Fp4Code(8).canonical().bits() == 0);
}

TEST_CASE("fp4 encode: zero, saturation, ties") {
  CHECK(Fp4Code::encode(0.0).value() == 0.0);
  CHECK(Fp4Code::encode(6.0).value() == 6.0);
  CHECK(Fp4Code::encode(100.0).value() == 6.0);
  CHECK(Fp4Code::encode(-100.0).value() == -6.0);
  // tie between 1 and 1.5 resolves to the smaller magnitude
  CHECK(Fp4Code::encode(1.25).value() == 1.0);
  CHECK(Fp4Code::encode(-1.25).value() == -1.0);
  CHECK(Fp4Code::encode(0.25).value() == 0.0);
}

TEST_CASE("fp4 encode matches the enumeration oracle") {
  std::mt19937_64 gen(7);
  for (int i = 0; i < 20000; ++i) {
    double x = (static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5) * 16.0;
    CAPTURE(x);
    CHECK(Fp4Code::encode(x).value() == encode_oracle(x));
  }
}

TEST_CASE("fp4 encode stays within half the local codebook gap") {
  for (double x = -6.0; x <= 6.0; x += 0.01) {
    CHECK(std::abs(Fp4Code::encode(x).value() - x) <= 1.0 + 1e-12);
  }
}

TEST_CASE("quantize: zeros, clamping, half away from zero") {
  auto z = quantize_activations(std::vector<double>{0, 0, 0}, 8, 1.0);
  CHECK(z.values == std::vector<std::int32_t>{0, 0, 0});

  auto c = quantize_activations(std::vector<double>{127.4, -128.6}, 8, 1.0);
  CHECK(c.values == std::vector<std::int32_t>{127, -128});

  auto h = quantize_activations(std::vector<double>{0.5, -0.5}, 8, 1.0);
  CHECK(h.values == std::vector<std::int32_t>{1, -1});
}

TEST_CASE("quantize rejects bad arguments") {
  std::vector<double> xs{1.0};
  CHECK_THROWS_AS(quantize_activations(xs, 1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(quantize_activations(xs, 8, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(quantize_activations(xs, 8, -1.0), std::invalid_argument);
}

TEST_CASE("quantize matches a scalar oracle on random input") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 2000; ++trial) {
    int b = 2 + static_cast<int>(gen() % 15);
    double scale = std::ldexp(1.0, static_cast<int>(gen() % 7) - 3);
    double x = (static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5) * 600.0;
    auto q = quantize_activations(std::vector<double>{x}, b, scale);
    // round half away from zero, then clamp
    double r = std::trunc(std::abs(x) / scale + 0.5) * (x < 0 ? -1.0 : 1.0);
    double lo = -std::ldexp(1.0, b - 1);
    double hi = std::ldexp(1.0, b - 1) - 1;
    r = std::min(std::max(r, lo), hi);
    CAPTURE(x);
    CAPTURE(b);
    CAPTURE(scale);
    CHECK(q.values[0] == static_cast<std::int32_t>(r));
  }
}

TEST_CASE("pow2 scale is a power of two and admits the max element") {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 500; ++trial) {
    int b = 2 + static_cast<int>(gen() % 15);
    std::vector<double> xs(1 + gen() % 32);
    for (auto& v : xs) {
      v = (static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5) * 1e3;
    }
    double s = choose_pow2_scale(xs, b);
    int exp = 0;
    CHECK(std::frexp(s, &exp) == 0.5);  // exact power of two
    double limit = std::ldexp(1.0, b - 1) - 1;
    for (double v : xs) CHECK(std::abs(v) / s <= limit);
    // minimality: half the scale would overflow the range
    double max_abs = 0;
    for (double v : xs) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs > 0) CHECK(max_abs / (s / 2) > limit);
  }
  CHECK(choose_pow2_scale(std::vector<double>{}, 8) == 1.0);
  CHECK(choose_pow2_scale(std::vector<double>{0, 0}, 8) == 1.0);
}

TEST_CASE("bit planes: all-zero and minus-one fixtures") {
  IntActivationVector v;
  v.bit_width = 4;
  v.values = {0};
  auto planes = bit_planes(v);
  REQUIRE(planes.size() == 4);
  for (const auto& p : planes) CHECK(p.bits[0] == 0);

  v.values = {-1};  // two's complement 1111
  planes = bit_planes(v);
  for (const auto& p : planes) CHECK(p.bits[0] == 1);
  CHECK(planes[3].weight == -8);
}

TEST_CASE("bit planes reconstruct every 4-bit value") {
  for (int x = -8; x <= 7; ++x) {
    IntActivationVector v;
    v.bit_width = 4;
    v.values = {x, -3, 5};
    if (x == -3 || x == 5) continue;
    auto planes = bit_planes(v);
    for (std::size_t i = 0; i < v.values.size(); ++i) {
      std::int64_t acc = 0;
      for (const auto& p : planes) acc += p.weight * p.bits[i];
      CHECK(acc == v.values[i]);
    }
  }
}

TEST_CASE("bit planes round-trip across widths 2..16") {
  std::mt19937_64 gen(17);
  for (int b = 2; b <= 16; ++b) {
    const std::int32_t lo = -(1 << (b - 1));
    const std::int32_t hi = (1 << (b - 1)) - 1;
    IntActivationVector v;
    v.bit_width = b;
    v.values = {lo, hi, 0};
    for (int i = 0; i < 61; ++i) {
      v.values.push_back(lo + static_cast<std::int32_t>(gen() % (hi - lo + 1)));
    }
    auto planes = bit_planes(v);
    REQUIRE(static_cast<int>(planes.size()) == b);
    for (std::size_t i = 0; i < v.values.size(); ++i) {
      std::int64_t acc = 0;
      for (const auto& p : planes) acc += p.weight * p.bits[i];
      CHECK(acc == v.values[i]);
    }
  }
}

}  // TEST_SUITE
