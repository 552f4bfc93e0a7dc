#pragma once

#include <cstdint>
#include <random>

namespace gps {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream identifiers beyond the per-class arrival streams.
inline constexpr std::uint64_t kBrownianStream = 1U << 20;

/// Seed for the independent stream (replication, stream) under a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replication, std::uint64_t stream) {
  return splitmix64(splitmix64(splitmix64(master) ^ replication) ^ (stream * 0xd1342543de82ef95ULL));
}

inline Rng make_stream(std::uint64_t master, std::uint64_t replication, std::uint64_t stream) {
  return Rng(derive_seed(master, replication, stream));
}

}  // namespace gps
