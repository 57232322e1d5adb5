#pragma once

// Minimal deterministic RNG (xorshift64*). Standard-library distributions are
// implementation-defined, so anything that must reproduce bit-for-bit across
// builds draws through this instead.

#include <cstdint>

namespace combex {

struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed ? seed : 0x9e3779b97f4a7c15ULL) {}

  std::uint64_t next() {
    state ^= state >> 12;
    state ^= state << 25;
    state ^= state >> 27;
    return state * 0x2545F4914F6CDD1DULL;
  }

  int index(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }

  double uniform() { return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

}  // namespace combex
