#pragma once

#include <cstdint>
#include <random>

namespace rdc {

// Every random draw in the toolkit comes from one user seed. Independent
// consumers get their own engine, seeded from (seed, stream, index) through
// SplitMix64, so results never depend on call order or thread count.
namespace stream {
inline constexpr std::uint64_t kKMeansInit = 1;
inline constexpr std::uint64_t kAchievability = 2;
inline constexpr std::uint64_t kMonteCarlo = 3;
inline constexpr std::uint64_t kSweep = 4;
inline constexpr std::uint64_t kInstances = 5;
inline constexpr std::uint64_t kLinearCompressor = 6;
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream_id) ^ index);
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t index = 0) {
  return Engine(derive_seed(seed, stream_id, index));
}

}  // namespace rdc
