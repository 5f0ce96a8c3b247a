#pragma once

#include <cstdint>
#include <random>

namespace consense {

using RandomStream = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Derives an independent stream from a master seed and a path of indices.
///
/// Each index is folded into the state with one splitmix64 round, so
/// (seed, a, b) and (seed, b, a) give unrelated streams. The same inputs
/// always give the same stream, regardless of thread or call order.
template <class... Index>
RandomStream derive_stream(std::uint64_t seed, Index... path) {
  std::uint64_t state = detail::splitmix64(seed);
  ((state = detail::splitmix64(state ^ static_cast<std::uint64_t>(path))), ...);
  return RandomStream{state};
}

}  // namespace consense
