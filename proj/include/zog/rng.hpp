#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace zog {

/// SplitMix64 output function (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent child seed from (seed, index):
///   child = mix(seed ^ mix(index))
/// where mix is the SplitMix64 finalizer above. Multi-index splits fold left.
constexpr std::uint64_t split_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return splitmix64_mix(seed ^ splitmix64_mix(index));
}

constexpr std::uint64_t split_seed(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> indices) noexcept {
  for (auto i : indices) seed = split_seed(seed, i);
  return seed;
}

/// xoshiro256** seeded from a 64-bit value through SplitMix64.
///
/// Every derived variate uses only integer arithmetic on the 64-bit outputs,
/// except Gaussian draws which use Box-Muller (std::log, std::sqrt, std::cos).
/// A handle must not be shared between threads; derive per-task generators
/// with split_seed instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() noexcept;
  /// Uniform on the open interval (-1, 1).
  double uniform_symmetric() noexcept;
  /// -1 or +1 with equal probability (top output bit).
  double rademacher() noexcept;
  /// Standard normal, one Box-Muller draw per call (two uniforms consumed).
  double gaussian() noexcept;

  Rng split(std::uint64_t index) const noexcept { return Rng(split_seed(seed_, index)); }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace zog
