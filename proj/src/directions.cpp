#include "zog/directions.hpp"

#include <cmath>
#include <stdexcept>

namespace zog {

std::string_view method_name(DirectionKind kind) noexcept {
  switch (kind) {
    case DirectionKind::Gaussian: return "nes";
    case DirectionKind::Rademacher: return "spsa";
    case DirectionKind::UniformSym: return "rdsa";
  }
  return "?";
}

std::optional<DirectionKind> parse_method_name(std::string_view name) noexcept {
  if (name == "nes") return DirectionKind::Gaussian;
  if (name == "spsa") return DirectionKind::Rademacher;
  if (name == "rdsa") return DirectionKind::UniformSym;
  return std::nullopt;
}

std::vector<double> sample_direction(DirectionKind kind, std::size_t d, Rng& rng) {
  if (d == 0) throw std::invalid_argument("sample_direction: dimension must be >= 1");
  std::vector<double> out(d);
  switch (kind) {
    case DirectionKind::Gaussian:
      for (auto& v : out) v = rng.gaussian();
      break;
    case DirectionKind::Rademacher:
      for (auto& v : out) v = rng.rademacher();
      break;
    case DirectionKind::UniformSym:
      for (auto& v : out) v = rng.uniform_symmetric();
      break;
  }
  return out;
}

std::vector<double> xi_from_delta(DirectionKind kind, std::span<const double> delta_vec,
                                  double reciprocal_cap) {
  if (delta_vec.empty()) throw std::invalid_argument("xi_from_delta: empty direction");
  if (!(reciprocal_cap > 0.0)) throw std::invalid_argument("xi_from_delta: cap must be > 0");
  if (kind == DirectionKind::Rademacher) return {delta_vec.begin(), delta_vec.end()};

  std::vector<double> xi(delta_vec.size());
  for (std::size_t j = 0; j < delta_vec.size(); ++j) {
    const double v = delta_vec[j];
    if (v == 0.0) {
      xi[j] = reciprocal_cap;
      continue;
    }
    // Compare magnitudes before dividing so 1/v never overflows.
    if (std::abs(v) * reciprocal_cap <= 1.0) {
      xi[j] = std::copysign(reciprocal_cap, v);
    } else {
      xi[j] = 1.0 / v;
    }
  }
  return xi;
}

DirectionPair sample_pair(DirectionKind kind, std::size_t d, Rng& rng, double reciprocal_cap) {
  DirectionPair p;
  p.delta_vec = sample_direction(kind, d, rng);
  p.xi_vec = xi_from_delta(kind, p.delta_vec, reciprocal_cap);
  return p;
}

std::vector<std::vector<double>> enumerate_rademacher(std::size_t d) {
  if (d == 0 || d > 20) throw std::invalid_argument("enumerate_rademacher: d must be in [1, 20]");
  const std::size_t count = std::size_t{1} << d;
  std::vector<std::vector<double>> out;
  out.reserve(count);
  for (std::size_t code = 0; code < count; ++code) {
    std::vector<double> v(d);
    // Most significant bit is the first component, so counting order is lexicographic.
    for (std::size_t j = 0; j < d; ++j) v[j] = ((code >> (d - 1 - j)) & 1U) ? 1.0 : -1.0;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace zog
