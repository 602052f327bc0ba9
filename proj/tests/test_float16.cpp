#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

#include "doctest.h"
#include "usgrip/float16.hpp"

using namespace usgrip;

TEST_SUITE("float16") {

TEST_CASE("exactly representable values survive the round trip") {
  for (float v : {0.0f, 1.0f, -1.0f, 0.5f, 2.0f, -2.0f, 0.25f, 65504.0f, -65504.0f, 1.5f}) {
    CHECK(f16_to_f32(f32_to_f16(v)) == v);
  }
}

TEST_CASE("0.1 rounds to the binary16 reference value") {
  const uint16_t h = f32_to_f16(0.1f);
  CHECK(f16_to_f32(h) == doctest::Approx(0.0999755859375).epsilon(1e-12));
  CHECK(f16_to_f32(h) == 0.0999755859375f);
}

TEST_CASE("values beyond the binary16 range saturate to +-65504") {
  CHECK(f16_to_f32(f32_to_f16(70000.0f)) == 65504.0f);
  CHECK(f16_to_f32(f32_to_f16(-70000.0f)) == -65504.0f);
  CHECK(f16_to_f32(f32_to_f16(1e30f)) == 65504.0f);
  CHECK(f16_to_f32(f32_to_f16(std::numeric_limits<float>::infinity())) == 65504.0f);
}

TEST_CASE("ties round to even") {
  // 2^-25 is exactly half the smallest subnormal (2^-24): rounds to zero.
  CHECK(f32_to_f16(std::ldexp(1.0f, -25)) == 0);
  // 1.5 * 2^-25 rounds up to the smallest subnormal.
  CHECK(f16_to_f32(f32_to_f16(std::ldexp(1.5f, -25))) == std::ldexp(1.0f, -24));
  // 1 + 2^-11 is exactly between 1.0 and the next binary16 value; even -> 1.0.
  CHECK(f16_to_f32(f32_to_f16(1.0f + std::ldexp(1.0f, -11))) == 1.0f);
  // 1 + 3*2^-11 ties between mantissa 1 (odd) and 2 (even) -> 1 + 2^-9.
  CHECK(f16_to_f32(f32_to_f16(1.0f + 3.0f * std::ldexp(1.0f, -11))) == 1.0f + std::ldexp(1.0f, -9));
}

TEST_CASE("exhaustive: every finite binary16 pattern decodes and re-encodes to itself") {
  for (uint32_t bits = 0; bits < 0x10000u; ++bits) {
    const uint16_t h = static_cast<uint16_t>(bits);
    if (((h >> 10) & 0x1Fu) == 0x1Fu) continue;  // inf/NaN excluded
    const float f = f16_to_f32(h);
    CHECK(f32_to_f16(f) == h);
  }
}

TEST_CASE("round trip error is bounded by half ulp for in-range values") {
  for (int i = 0; i < 2000; ++i) {
    const float v = -8.0f + 16.0f * static_cast<float>(i) / 2000.0f;
    const float back = f16_to_f32(f32_to_f16(v));
    const float ulp = std::ldexp(1.0f, std::max(-24, std::ilogb(std::max(std::abs(v), 1e-30f)) - 10));
    CHECK(std::abs(back - v) <= ulp * 0.5f);
  }
}

}  // TEST_SUITE
