#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace icluster {

using Rng = std::mt19937_64;

/// splitmix64 finaliser; mixes a 64-bit value into a well-spread one.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for an independent stream identified by (base, k1, k2, ...). Streams
/// depend only on the key, never on execution order.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(base);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

}  // namespace icluster
