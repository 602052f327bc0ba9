#pragma once

#include <bit>
#include <cstdint>

namespace usgrip {

// IEEE 754 binary16 encode/decode. Encoding rounds to nearest, ties to even.
// Finite values beyond +-65504 saturate to +-65504 instead of producing an
// infinity; weight compression must stay finite.

inline constexpr uint16_t kF16MaxBits = 0x7BFF;  // 65504.0

inline uint16_t f32_to_f16(float f) {
  const uint32_t x = std::bit_cast<uint32_t>(f);
  const uint16_t sign = static_cast<uint16_t>((x >> 16) & 0x8000u);
  const uint32_t absx = x & 0x7FFFFFFFu;

  if (absx >= 0x7F800000u) {
    if (absx > 0x7F800000u) return static_cast<uint16_t>(sign | 0x7E00u);  // NaN
    return static_cast<uint16_t>(sign | kF16MaxBits);                      // inf saturates
  }

  const int32_t e = static_cast<int32_t>(absx >> 23) - 127 + 15;
  const uint32_t m = absx & 0x007FFFFFu;

  if (e >= 31) return static_cast<uint16_t>(sign | kF16MaxBits);  // overflow saturates

  if (e <= 0) {
    // Subnormal (or zero) in binary16: value in units of 2^-24.
    const int shift = 14 - e;
    if (shift > 25) return sign;
    const uint32_t full = m | 0x00800000u;
    uint32_t q = full >> shift;
    const uint32_t rem = full & ((1u << shift) - 1);
    const uint32_t half = 1u << (shift - 1);
    if (rem > half || (rem == half && (q & 1u))) ++q;
    return static_cast<uint16_t>(sign | q);
  }

  uint16_t h = static_cast<uint16_t>((static_cast<uint32_t>(e) << 10) | (m >> 13));
  const uint32_t rem = m & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) {
    ++h;  // carry may bump the exponent; that is correct rounding
    if ((h & 0x7C00u) == 0x7C00u) return static_cast<uint16_t>(sign | kF16MaxBits);
  }
  return static_cast<uint16_t>(sign | h);
}

inline float f16_to_f32(uint16_t h) {
  const uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
  const uint32_t exp = (h >> 10) & 0x1Fu;
  const uint32_t man = h & 0x3FFu;

  uint32_t bits;
  if (exp == 0) {
    if (man == 0) {
      bits = sign;  // +-0
    } else {
      // Normalize the subnormal.
      int e = -1;
      uint32_t m = man;
      do {
        ++e;
        m <<= 1;
      } while ((m & 0x400u) == 0);
      bits = sign | ((127 - 15 - e) << 23) | ((m & 0x3FFu) << 13);
    }
  } else if (exp == 31) {
    bits = sign | 0x7F800000u | (man << 13);  // inf / NaN
  } else {
    bits = sign | ((exp - 15 + 127) << 23) | (man << 13);
  }
  return std::bit_cast<float>(bits);
}

}  // namespace usgrip
