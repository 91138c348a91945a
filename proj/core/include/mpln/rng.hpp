#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace mpln {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a base seed and an ordered list of keys.
///
/// Every random stream in the library is keyed this way (by G, run index,
/// observation identity, EM iteration, chain...) so results never depend on
/// the order in which work is scheduled.
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64(base);
  for (auto k : keys) {
    h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  }
  return h;
}

/// FNV-1a over the bytes of a string; stable across platforms and runs.
constexpr std::uint64_t stable_hash(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace mpln
