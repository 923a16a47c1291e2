#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cusumrl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// master seed and a tuple of integer tags, so that the seed of a work item
/// depends only on its coordinates and never on scheduling order.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags, kept distinct so no two consumers share a stream.
namespace stream {
inline constexpr std::uint64_t kBasis = 1;
inline constexpr std::uint64_t kMedian = 2;
inline constexpr std::uint64_t kBootstrap = 3;
inline constexpr std::uint64_t kFolds = 4;
inline constexpr std::uint64_t kRepetition = 5;
inline constexpr std::uint64_t kKappa = 6;
inline constexpr std::uint64_t kEnvNoise = 7;
inline constexpr std::uint64_t kExplore = 8;
inline constexpr std::uint64_t kSchedule = 9;
inline constexpr std::uint64_t kBaseline = 10;
inline constexpr std::uint64_t kReplication = 11;
inline constexpr std::uint64_t kKernel = 12;
}  // namespace stream

}  // namespace cusumrl
