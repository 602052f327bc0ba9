#pragma once

#include <cstdint>
#include <vector>

namespace usgrip {

// Deterministic PRNGs with pinned constants so datasets and weight
// initializations reproduce bit-exactly across builds and languages.
//
// SplitMix64: Steele, Lea & Flood (2014). Used for seeding and for deriving
// independent per-item streams from (seed, index).
struct SplitMix64 {
  uint64_t state = 0;

  explicit SplitMix64(uint64_t seed) : state(seed) {}

  uint64_t next() {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
};

// Stream key for item `index` under `seed`; order-independent, so frames can
// be generated (or regenerated) in any order.
inline uint64_t stream_seed(uint64_t seed, uint64_t index) {
  SplitMix64 sm(seed ^ (0xA0761D6478BD642Full * (index + 1)));
  return sm.next();
}

// xoshiro256** 1.0 (Blackman & Vigna, 2018).
class Xoshiro256ss {
 public:
  explicit Xoshiro256ss(uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
  }

  uint64_t next() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  uint32_t next_u32() { return static_cast<uint32_t>(next() >> 32); }

  // 24 random bits -> [0, 1).
  float next_float() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }

  // 53 random bits -> [0, 1).
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

  // Unbiased integer in [0, bound) by rejection.
  uint32_t below(uint32_t bound) {
    const uint32_t limit = UINT32_MAX - UINT32_MAX % bound;
    uint32_t v;
    do {
      v = next_u32();
    } while (v >= limit);
    return v % bound;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
};

// Fisher-Yates, descending index order.
template <typename T>
void shuffle(std::vector<T>& items, Xoshiro256ss& rng) {
  for (size_t i = items.size(); i > 1; --i) {
    const size_t j = rng.below(static_cast<uint32_t>(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace usgrip
