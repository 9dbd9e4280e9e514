#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zog/rng.hpp"

namespace zog {

/// Distribution of the random probe directions.
///   Gaussian   -> NES
///   Rademacher -> SPSA
///   UniformSym -> RDSA
enum class DirectionKind { Gaussian, Rademacher, UniformSym };

std::string_view method_name(DirectionKind kind) noexcept;
std::optional<DirectionKind> parse_method_name(std::string_view name) noexcept;

inline constexpr double kDefaultReciprocalCap = 1e6;

/// A probe direction and the weight vector it is paired with in the estimate.
struct DirectionPair {
  std::vector<double> delta_vec;
  std::vector<double> xi_vec;
};

/// Draws one direction with i.i.d. components. Throws std::invalid_argument for d == 0.
std::vector<double> sample_direction(DirectionKind kind, std::size_t d, Rng& rng);

/// Componentwise reciprocal with |xi_j| clamped to reciprocal_cap (sign kept).
/// A component that is exactly zero maps to +reciprocal_cap.
/// Rademacher directions are their own reciprocal and are copied unchanged.
std::vector<double> xi_from_delta(DirectionKind kind, std::span<const double> delta_vec,
                                  double reciprocal_cap = kDefaultReciprocalCap);

DirectionPair sample_pair(DirectionKind kind, std::size_t d, Rng& rng,
                          double reciprocal_cap = kDefaultReciprocalCap);

/// All 2^d sign vectors in lexicographic order with -1 < +1. d must be in [1, 20].
std::vector<std::vector<double>> enumerate_rademacher(std::size_t d);

}  // namespace zog
