#pragma once

#include <cstdint>
#include <random>

namespace envdiag {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for child `index` of `parent`:
///   derive_seed(parent, index) = splitmix64(splitmix64(parent) ^ (index + 1) * golden)
/// Depends only on the pair, so batch members can be generated in any order.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(splitmix64(parent) ^ ((index + 1) * 0x9E3779B97F4A7C15ULL));
}

inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

}  // namespace envdiag
