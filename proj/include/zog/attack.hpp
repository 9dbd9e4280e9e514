#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "zog/estimator.hpp"
#include "zog/oracle.hpp"
#include "zog/rng.hpp"

namespace zog {

struct AttackConfig {
  double epsilon = 0.05;
  double step_size = 0.005;
  EstimatorConfig estimator;
  std::uint64_t max_iterations = 10'000;
  /// Domain box. Classifier inputs live in [0, 1]; synthetic objectives
  /// usually clear both bounds.
  std::optional<double> clip_lo = 0.0;
  std::optional<double> clip_hi = 1.0;
  std::uint64_t budget = kDefaultBudget;

  /// Throws std::invalid_argument on epsilon < 0, step_size <= 0,
  /// step_size > epsilon (when epsilon > 0), or an empty domain box.
  void validate() const;
};

enum class FailureReason { Budget, IterationCap };

std::string_view to_string(FailureReason reason) noexcept;

struct AttackOutcome {
  bool success = false;
  std::uint64_t queries = 0;
  std::uint64_t iterations = 0;
  Point x_adv;
  double linf_dist = 0.0;
  std::size_t target = 0;
  std::optional<FailureReason> failure_reason;

  bool operator==(const AttackOutcome&) const = default;
};

double linf_distance(std::span<const double> a, std::span<const double> b);

/// Clamp each component into [x0 - epsilon, x0 + epsilon].
Point project_linf(std::span<const double> x, std::span<const double> x0, double epsilon);

/// x' = clip(project_linf(x - step * sign(grad), x0, epsilon)), sign(0) = 0.
Point pgd_step(std::span<const double> x, std::span<const double> grad, std::span<const double> x0,
               const AttackConfig& cfg);

/// Targeted PGD on loss_at_target driven by estimated gradients.
///
/// Query schedule, every query charged against min(oracle budget, cfg.budget):
///   1 initial query: least-likely-class selection when `target` is empty,
///     otherwise a success check at x0 (argmax == target stops immediately);
///   per iteration: query_cost(cfg.estimator) for the estimate, then 1 query
///     for the success check at the new iterate.
/// A refused query ends the run with FailureReason::Budget; no evaluation
/// follows a refusal. With epsilon == 0 no step is taken.
AttackOutcome run_attack(Oracle& oracle, std::span<const double> x0, const AttackConfig& cfg, Rng& rng,
                         std::optional<std::size_t> target = std::nullopt);

/// Closed-form query count for an outcome that ran `iterations` full
/// iterations without a refusal.
std::uint64_t planned_queries(const AttackConfig& cfg, std::uint64_t iterations) noexcept;

}  // namespace zog
