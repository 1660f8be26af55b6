#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace hnlpu {

/// 4-bit weight code in E2M1 layout: bit 3 sign, bits 2..1 exponent, bit 0
/// mantissa. The 16 codes decode to {0, ±0.5, ±1, ±1.5, ±2, ±3, ±4, ±6};
/// codes 0 and 8 (+0 / -0) both decode to 0.
///
/// Decoded values are carried as exact integers scaled by 2x (scaled_int),
/// so every arithmetic path over weights stays in exact integer arithmetic
/// until a single final dequantization by scale/2.
class Fp4Code {
public:
  Fp4Code() = default;
  explicit constexpr Fp4Code(std::uint8_t code) : code_(code & 0xF) {}

  /// Nearest codebook value; ties broken toward the smaller magnitude.
  /// Saturates to ±6 outside the representable range.
  static Fp4Code encode(double x);

  constexpr std::uint8_t bits() const { return code_; }

  /// value() * 2, exact. One of {0, ±1, ±2, ±3, ±4, ±6, ±8, ±12}.
  constexpr int scaled_int() const {
    int mag = kScaledMagnitude[code_ & 0x7];
    return (code_ & 0x8) ? -mag : mag;
  }

  constexpr double value() const { return scaled_int() / 2.0; }

  constexpr bool is_zero() const { return (code_ & 0x7) == 0; }

  /// Maps -0 onto +0 so region keys are unique per decoded value.
  constexpr Fp4Code canonical() const {
    return is_zero() ? Fp4Code(0) : *this;
  }

  friend constexpr bool operator==(Fp4Code a, Fp4Code b) {
    return a.code_ == b.code_;
  }

private:
  static constexpr std::array<int, 8> kScaledMagnitude = {0, 1, 2, 3,
                                                          4, 6, 8, 12};
  std::uint8_t code_ = 0;
};

inline constexpr int kFp4CodeCount = 16;

/// Row-major matrix of FP4 weight codes with one per-tensor scale.
/// Scales are restricted to powers of two so that dequantized values and
/// their dot products are exact dyadic rationals in double precision.
struct Fp4Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> codes;  // rows*cols nibbles, one per byte
  double scale = 1.0;

  Fp4Code at(int r, int c) const {
    return Fp4Code(codes[static_cast<std::size_t>(r) * cols + c]);
  }
  std::size_t size() const { return codes.size(); }
};

/// B-bit two's-complement integer activations with a per-tensor scale.
/// Dequantized value of element i is values[i] * scale.
struct IntActivationVector {
  std::vector<std::int32_t> values;
  int bit_width = 8;
  double scale = 1.0;
};

/// One bit position of the LSB-first serialization of an activation vector.
/// Plane t < B-1 carries weight 2^t; the sign plane t = B-1 carries -2^(B-1).
struct BitPlane {
  int index = 0;
  std::vector<std::uint8_t> bits;  // one 0/1 per activation element
  std::int64_t weight = 0;
};

inline constexpr int kMinActivationBits = 2;
inline constexpr int kMaxActivationBits = 30;

/// v_i = clamp(round(x_i / scale)) into the B-bit two's-complement range,
/// rounding half away from zero. Throws std::invalid_argument for B outside
/// [2, 30] or scale <= 0.
IntActivationVector quantize_activations(std::span<const double> xs,
                                         int bit_width, double scale);

/// Smallest power-of-two scale such that round(max|x|/scale) fits in B bits.
/// Returns 1.0 for an all-zero (or empty) input.
double choose_pow2_scale(std::span<const double> xs, int bit_width);

/// LSB-first bit planes of the two's-complement encodings.
/// sum_t weight(t) * bits_i(t) reconstructs values[i] exactly.
std::vector<BitPlane> bit_planes(const IntActivationVector& v);

}  // namespace hnlpu
