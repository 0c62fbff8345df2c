#pragma once

#include <cstdint>
#include <random>

namespace nrd {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator for substream `stream` of a global seed.
inline Rng substream(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5bd1e995ULL)));
}

// Named substreams used across the project.
enum class Stream : std::uint64_t {
  model_init = 1,
  pool_init = 2,
  batch = 3,
  seeds = 4,
  unroll = 5,
  simulation = 6,
  gradcheck = 7,
};

inline Rng substream(std::uint64_t seed, Stream s) { return substream(seed, static_cast<std::uint64_t>(s)); }

}  // namespace nrd
