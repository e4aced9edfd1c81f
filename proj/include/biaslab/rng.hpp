#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace biaslab {

using Rng = std::mt19937_64;

// Seed for a named sub-stream ("corpus", "init", "train", "generate", ...)
// of a global seed. Components re-run independently see the same stream.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stream,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : stream) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(global_seed ^ h) + index);
}

// Uniform double in [0, 1) with 53 random bits; independent of the
// standard library's distribution implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace biaslab
