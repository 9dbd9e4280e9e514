#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "zog/directions.hpp"
#include "zog/oracle.hpp"
#include "zog/rng.hpp"

namespace zog {

enum class Sidedness { OneSided, TwoSided };

struct EstimatorConfig {
  DirectionKind kind = DirectionKind::Rademacher;
  Sidedness sidedness = Sidedness::TwoSided;
  std::size_t samples = 50;  // n
  double delta = 1e-3;
  double reciprocal_cap = kDefaultReciprocalCap;
  /// Probe evaluations run on this many threads when the oracle allows it.
  std::size_t workers = 1;

  /// Throws std::invalid_argument unless samples >= 1, delta > 0, cap > 0.
  void validate() const;
};

struct GradientEstimate {
  std::vector<double> grad;
  std::uint64_t queries_used = 0;
};

/// 2n for two-sided estimates, n + 1 for one-sided (f(x) evaluated once).
std::uint64_t query_cost(const EstimatorConfig& cfg) noexcept;

/// Random-basis finite-difference gradient of loss_at_target:
///
///   one-sided:  (1/n) sum_i [(f(x + d D_i) - f(x)) / d] xi_i
///   two-sided:  (1/n) sum_i [(f(x + d D_i) - f(x - d D_i)) / (2d)] xi_i
///
/// with D_i drawn from cfg.kind and xi_i = D_i^-1 (capped). All n directions
/// are drawn from `rng` before any query is issued, and the sum runs in
/// sample order, so the result does not depend on cfg.workers.
///
/// Throws EstimateAborted (a BudgetExhausted) if the oracle refuses a probe.
GradientEstimate estimate_gradient(Oracle& oracle, std::span<const double> x, std::size_t target,
                                   const EstimatorConfig& cfg, Rng& rng);

/// Same estimator over a caller-supplied direction set (n = directions.size()).
/// cfg.kind only selects how xi is derived from each direction.
GradientEstimate estimate_gradient_along(Oracle& oracle, std::span<const double> x, std::size_t target,
                                         const EstimatorConfig& cfg,
                                         std::span<const std::vector<double>> directions);

struct EstimatorDiagnostics {
  /// Mean over trials of cos(estimate, true gradient); empty when the true
  /// gradient is zero.
  std::optional<double> mean_cosine;
  /// || mean of the trial estimates - true gradient ||_2
  double avg_error = 0.0;
  std::uint64_t queries = 0;
};

/// Runs `trials` independent estimates against an oracle with an analytic
/// gradient. Throws std::invalid_argument if the oracle has none.
EstimatorDiagnostics estimator_diagnostics(Oracle& oracle, std::span<const double> x, std::size_t target,
                                           const EstimatorConfig& cfg, std::size_t trials, Rng& rng);

/// Finite-difference error of the estimator over a fixed direction set.
struct BiasProfile {
  /// mean_i(estimate_i) - true gradient, componentwise.
  std::vector<double> expectation_bias;
  /// RMS over directions of || (q_i(delta) - grad . D_i) xi_i ||_2, where
  /// q_i is the difference quotient. This is the truncation error of each
  /// single-direction estimate against its delta -> 0 limit.
  double truncation_rms = 0.0;
};

BiasProfile bias_profile(Oracle& oracle, std::span<const double> x, std::size_t target,
                         const EstimatorConfig& cfg, std::span<const std::vector<double>> directions);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> xs, std::span<const double> ys);

}  // namespace zog
