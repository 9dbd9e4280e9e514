#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace zog {

using Point = std::vector<double>;

inline constexpr std::uint64_t kDefaultBudget = 1'000'000;

/// Running count of oracle evaluations against a hard cap.
///
/// try_charge is linearizable: concurrent callers never push `used` past
/// `budget`, and a refused charge leaves the count unchanged.
class QueryLedger {
 public:
  explicit QueryLedger(std::uint64_t budget = kDefaultBudget);
  QueryLedger(const QueryLedger&) = delete;
  QueryLedger& operator=(const QueryLedger&) = delete;

  std::uint64_t used() const noexcept { return used_.load(std::memory_order_acquire); }
  std::uint64_t budget() const noexcept { return budget_; }
  std::uint64_t remaining() const noexcept { return budget_ - used(); }

  /// Reserves one query. Returns false (and changes nothing) when full.
  bool try_charge() noexcept;
  /// Returns a reservation whose evaluation never happened.
  void refund() noexcept { used_.fetch_sub(1, std::memory_order_acq_rel); }

 private:
  std::atomic<std::uint64_t> used_{0};
  std::uint64_t budget_;
};

/// The black box: metered access to class scores.
///
/// Each successful logits() call costs exactly one query. A call that would
/// exceed the budget throws BudgetExhausted before the model is evaluated.
/// Dimension mismatches throw std::invalid_argument.
class Oracle {
 public:
  virtual ~Oracle() = default;

  virtual std::size_t input_dim() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual bool concurrency_safe() const { return false; }

  virtual std::vector<double> logits(std::span<const double> x) = 0;

  /// Scalar attack objective at `target`, one query. The default is the
  /// softmax cross-entropy of logits(x) against target; objectives that are
  /// not classifiers override it.
  virtual double loss(std::span<const double> x, std::size_t target);

  virtual const QueryLedger& ledger() const = 0;
};

/// Base for oracles evaluated in this process: checks dimensions, charges the
/// ledger, then calls evaluate().
class LocalOracle : public Oracle {
 public:
  explicit LocalOracle(std::uint64_t budget = kDefaultBudget) : ledger_(budget) {}

  bool concurrency_safe() const override { return true; }
  std::vector<double> logits(std::span<const double> x) final;
  const QueryLedger& ledger() const final { return ledger_; }

 protected:
  void charge(std::span<const double> x);
  virtual std::vector<double> evaluate(std::span<const double> x) const = 0;

 private:
  QueryLedger ledger_;
};

/// Forwards to another oracle under an additional, usually smaller, budget.
/// Used to give one attack run its own slice of a shared oracle.
class BudgetSlice final : public Oracle {
 public:
  BudgetSlice(Oracle& inner, std::uint64_t budget) : inner_(inner), ledger_(budget) {}

  std::size_t input_dim() const override { return inner_.input_dim(); }
  std::size_t num_classes() const override { return inner_.num_classes(); }
  bool concurrency_safe() const override { return inner_.concurrency_safe(); }
  std::vector<double> logits(std::span<const double> x) override;
  double loss(std::span<const double> x, std::size_t target) override;
  const QueryLedger& ledger() const override { return ledger_; }

 private:
  Oracle& inner_;
  QueryLedger ledger_;
};

/// Softmax cross-entropy -log softmax(logits)[target], log-sum-exp stabilized.
double cross_entropy(std::span<const double> logits, std::size_t target);

/// Index of the largest score; ties go to the lowest index.
std::size_t argmax(std::span<const double> scores);
/// Index of the smallest score; ties go to the lowest index.
std::size_t argmin(std::span<const double> scores);

double loss_at_target(Oracle& oracle, std::span<const double> x, std::size_t target);
std::size_t least_likely_class(Oracle& oracle, std::span<const double> x);
std::size_t predicted_class(Oracle& oracle, std::span<const double> x);

}  // namespace zog
