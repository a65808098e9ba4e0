#pragma once

#include <cstdint>
#include <string_view>

namespace stobnts {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

/// Derives an independent seed for a named stream from the master seed.
///
///   seed = mix(mix(mix(master ^ fnv1a(stream)) ^ a) ^ b)
///
/// Streams used by the engine: "objective", "init", "init-theta0",
/// "noise"(t, i), "theta0"(t, i), "theta0-prime"(t, i), "search"(t, i),
/// "gp-sample"(t, i). Every value depends only on (master, stream, a, b),
/// so any iteration can be replayed without carrying generator state.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return mix64(mix64(mix64(master ^ fnv1a(stream)) ^ a) ^ b);
}

}  // namespace stobnts
