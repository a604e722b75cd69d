#pragma once

#include <cstdint>
#include <initializer_list>

namespace ivantage {

// SplitMix64 finalizer; used to derive independent streams from keys.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_keys(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = 0x2545F4914F6CDD1DULL;
  for (std::uint64_t k : keys) h = mix64(h ^ k);
  return h;
}

// Uniform in [0, 1) from a 64-bit hash.
constexpr double unit_interval(std::uint64_t h) {
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

}  // namespace ivantage
