#pragma once

#include <cstdint>
#include <random>

namespace gmnds {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Bijective; scrambles a 64-bit word well enough to
/// decorrelate neighbouring seeds and stream indices.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based substream derivation: (seed, stream) -> engine seed.
/// Substreams of the same seed are independent for Monte Carlo purposes, so
/// parallel loops stay reproducible regardless of scheduling.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(substream_seed(seed, stream));
}

}  // namespace gmnds
