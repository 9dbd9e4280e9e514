#include "zog/attack.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

#include "zog/errors.hpp"

namespace zog {

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("attack: epsilon must be >= 0");
  if (!(step_size > 0.0)) throw std::invalid_argument("attack: step size must be > 0");
  if (epsilon > 0.0 && step_size > epsilon) throw std::invalid_argument("attack: step size exceeds epsilon");
  if (budget == 0) throw std::invalid_argument("attack: budget must be positive");
  if (clip_lo && clip_hi && *clip_lo > *clip_hi) throw std::invalid_argument("attack: empty domain box");
  estimator.validate();
}

std::string_view to_string(FailureReason reason) noexcept {
  switch (reason) {
    case FailureReason::Budget: return "budget";
    case FailureReason::IterationCap: return "iteration-cap";
  }
  return "?";
}

double linf_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("linf_distance: dimension mismatch");
  double m = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
  return m;
}

Point project_linf(std::span<const double> x, std::span<const double> x0, double epsilon) {
  if (x.size() != x0.size()) throw std::invalid_argument("project_linf: dimension mismatch");
  Point out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    double v = std::clamp(x[j], x0[j] - epsilon, x0[j] + epsilon);
    // x0 +- epsilon is rounded; pull back until the measured distance obeys the bound.
    while (std::abs(v - x0[j]) > epsilon) v = std::nextafter(v, x0[j]);
    out[j] = v;
  }
  return out;
}

Point pgd_step(std::span<const double> x, std::span<const double> grad, std::span<const double> x0,
               const AttackConfig& cfg) {
  if (x.size() != grad.size() || x.size() != x0.size()) throw std::invalid_argument("pgd_step: dimension mismatch");
  Point moved(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double s = grad[j] > 0.0 ? 1.0 : (grad[j] < 0.0 ? -1.0 : 0.0);
    moved[j] = x[j] - cfg.step_size * s;
  }
  auto out = project_linf(moved, x0, cfg.epsilon);
  for (auto& v : out) {
    if (cfg.clip_lo) v = std::max(v, *cfg.clip_lo);
    if (cfg.clip_hi) v = std::min(v, *cfg.clip_hi);
  }
  return out;
}

std::uint64_t planned_queries(const AttackConfig& cfg, std::uint64_t iterations) noexcept {
  return 1 + iterations * (query_cost(cfg.estimator) + 1);
}

AttackOutcome run_attack(Oracle& oracle, std::span<const double> x0, const AttackConfig& cfg, Rng& rng,
                         std::optional<std::size_t> target) {
  cfg.validate();
  if (x0.size() != oracle.input_dim()) throw std::invalid_argument("run_attack: x0 dimension mismatch");
  for (double v : x0) {
    if ((cfg.clip_lo && v < *cfg.clip_lo) || (cfg.clip_hi && v > *cfg.clip_hi)) {
      throw std::invalid_argument("run_attack: x0 outside the domain box");
    }
  }
  if (target && *target >= oracle.num_classes()) throw std::invalid_argument("run_attack: target out of range");

  BudgetSlice metered(oracle, cfg.budget);
  AttackOutcome out;
  Point x(x0.begin(), x0.end());

  const auto finish = [&](bool success, std::optional<FailureReason> reason) {
    out.success = success;
    out.failure_reason = reason;
    out.queries = metered.ledger().used();
    out.linf_dist = linf_distance(x, x0);
    out.x_adv = x;
    return out;
  };

  try {
    const auto clean = metered.logits(x0);
    out.target = target ? *target : argmin(clean);
    if (argmax(clean) == out.target) return finish(true, std::nullopt);
  } catch (const BudgetExhausted&) {
    out.target = target.value_or(0);
    return finish(false, FailureReason::Budget);
  }
  if (cfg.epsilon == 0.0) return finish(false, FailureReason::IterationCap);

  while (out.iterations < cfg.max_iterations) {
    try {
      const auto est = estimate_gradient(metered, x, out.target, cfg.estimator, rng);
      x = pgd_step(x, est.grad, x0, cfg);
      ++out.iterations;
      assert(linf_distance(x, x0) <= cfg.epsilon);
      if (argmax(metered.logits(x)) == out.target) return finish(true, std::nullopt);
    } catch (const BudgetExhausted&) {
      return finish(false, FailureReason::Budget);
    }
  }
  return finish(false, FailureReason::IterationCap);
}

}  // namespace zog
