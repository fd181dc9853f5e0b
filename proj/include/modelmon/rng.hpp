#pragma once

#include <cstdint>
#include <initializer_list>

namespace modelmon {

// Counter-based randomness. Sketch states keep only a seed, so every random
// decision is a pure function of (seed, position) and states serialize
// without generator internals.

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Hash-combines a seed with further words into a well-mixed 64-bit value.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (auto w : words) h = splitmix64(h ^ (w + 0x632be59bd9b4e019ULL));
  return h;
}

__extension__ using uint128 = unsigned __int128;

/// Uniform integer in [0, bound) for bound > 0 (128-bit multiply-shift).
constexpr std::uint64_t bounded(std::uint64_t random_word, std::uint64_t bound) noexcept {
  return static_cast<std::uint64_t>((static_cast<uint128>(random_word) * bound) >> 64);
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double unit_interval(std::uint64_t random_word) noexcept {
  return static_cast<double>(random_word >> 11) * 0x1.0p-53;
}

}  // namespace modelmon
