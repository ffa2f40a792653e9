#pragma once

#include <cstdint>
#include <random>

namespace oplanes {

using Rng = std::mt19937_64;

// Independent stream for (seed, index), e.g. one per generated sample.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x6f706c6eu};
  return Rng(seq);
}

// [0, 1) with 53 random bits; fixed bit recipe so sequences are stable
// across standard library implementations.
inline double uniform01(Rng& rng) { return double(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace oplanes
