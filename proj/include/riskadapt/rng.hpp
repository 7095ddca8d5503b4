#pragma once

#include <cstdint>

namespace riskadapt {

/// Derives an independent child seed for `stream` from `seed` (splitmix64 finalizer).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream ids used when splitting a run's master seed.
inline constexpr std::uint64_t kStreamInit = 1;
inline constexpr std::uint64_t kStreamActionNoise = 2;
inline constexpr std::uint64_t kStreamEnvReset = 3;
inline constexpr std::uint64_t kStreamShuffle = 4;
inline constexpr std::uint64_t kStreamEval = 5;

}  // namespace riskadapt
