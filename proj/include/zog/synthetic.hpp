#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "zog/oracle.hpp"
#include "zog/rng.hpp"

namespace zog {

/// f(x) = g . x
struct LinearObjective {
  std::vector<double> g;
};

/// f(x) = x^T A x + b . x, A row-major d x d (not required to be symmetric).
struct QuadraticObjective {
  std::vector<double> a;
  std::vector<double> b;
};

/// f(x) = sum_j c_j x_j^3
struct CubicObjective {
  std::vector<double> c;
};

/// f(x) = cross-entropy(W x + bias, target), W row-major (classes x d).
struct SoftmaxRegression {
  std::vector<double> w;
  std::vector<double> bias;
  std::size_t target = 0;
};

using SyntheticObjective =
    std::variant<LinearObjective, QuadraticObjective, CubicObjective, SoftmaxRegression>;

std::size_t objective_dim(const SyntheticObjective& obj);
std::string_view objective_name(const SyntheticObjective& obj);
double objective_value(const SyntheticObjective& obj, std::span<const double> x);
std::vector<double> analytic_gradient(const SyntheticObjective& obj, std::span<const double> x);

/// A seeded objective together with the point it is probed at.
struct DiagnosticProblem {
  SyntheticObjective objective;
  Point x;
};

/// Builds a reproducible problem from `seed`:
///   linear     g_j ~ U(-2, 2)
///   quadratic  A_ij, b_j ~ U(-1, 1)
///   cubic      c_j ~ U(-2, 2)
///   softmax    3 classes, W_kj ~ N(0, 1), zero bias, target 0
/// and x_j = point_scale * U(-1, 1). Throws std::invalid_argument for an
/// unknown name or d == 0.
DiagnosticProblem make_diagnostic_problem(std::string_view name, std::size_t d, std::uint64_t seed,
                                          double point_scale = 1.0);

/// Oracles that can report their true gradient; needed by the estimator diagnostics.
class GradientOracle {
 public:
  virtual ~GradientOracle() = default;
  /// Gradient of loss(., target) at x. Does not consume queries.
  virtual std::vector<double> true_gradient(std::span<const double> x, std::size_t target) const = 0;
};

/// Metered oracle over a synthetic objective.
///
/// Scalar objectives expose one "class" whose logit is f(x), and loss()
/// returns f(x) regardless of target. SoftmaxRegression exposes its real
/// logits, and loss() is the cross-entropy at the requested target.
class SyntheticOracle final : public LocalOracle, public GradientOracle {
 public:
  explicit SyntheticOracle(SyntheticObjective objective, std::uint64_t budget = kDefaultBudget);

  std::size_t input_dim() const override { return dim_; }
  std::size_t num_classes() const override { return classes_; }
  double loss(std::span<const double> x, std::size_t target) override;
  std::vector<double> true_gradient(std::span<const double> x, std::size_t target) const override;

  const SyntheticObjective& objective() const { return objective_; }

 protected:
  std::vector<double> evaluate(std::span<const double> x) const override;

 private:
  SyntheticObjective objective_;
  std::size_t dim_;
  std::size_t classes_;
};

}  // namespace zog
