#include "zog/rng.hpp"

#include <cmath>
#include <numbers>

namespace zog {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;

}  // namespace

Rng::Rng(std::uint64_t seed) noexcept : seed_(seed) {
  std::uint64_t z = seed;
  for (auto& word : s_) {
    word = splitmix64_mix(z);
    z += 0x9E3779B97F4A7C15ULL;
  }
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * kTwoPow53Inv; }

double Rng::uniform_symmetric() noexcept {
  // (k + 0.5) / 2^53 lies strictly inside (0, 1), so 2u - 1 never reaches +-1.
  const double u = (static_cast<double>(next_u64() >> 11) + 0.5) * kTwoPow53Inv;
  return 2.0 * u - 1.0;
}

double Rng::rademacher() noexcept { return (next_u64() >> 63) ? 1.0 : -1.0; }

double Rng::gaussian() noexcept {
  const double u1 = 1.0 - uniform01();  // (0, 1]
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace zog
