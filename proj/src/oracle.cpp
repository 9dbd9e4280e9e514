#include "zog/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "zog/errors.hpp"

namespace zog {

QueryLedger::QueryLedger(std::uint64_t budget) : budget_(budget) {
  if (budget == 0) throw std::invalid_argument("QueryLedger: budget must be positive");
}

bool QueryLedger::try_charge() noexcept {
  std::uint64_t cur = used_.load(std::memory_order_relaxed);
  do {
    if (cur >= budget_) return false;
  } while (!used_.compare_exchange_weak(cur, cur + 1, std::memory_order_acq_rel,
                                        std::memory_order_relaxed));
  return true;
}

double Oracle::loss(std::span<const double> x, std::size_t target) {
  const auto scores = logits(x);
  return cross_entropy(scores, target);
}

void LocalOracle::charge(std::span<const double> x) {
  if (x.size() != input_dim()) {
    throw std::invalid_argument("oracle: input has " + std::to_string(x.size()) +
                                " components, expected " + std::to_string(input_dim()));
  }
  if (!ledger_.try_charge()) throw BudgetExhausted(ledger_.budget());
}

std::vector<double> LocalOracle::logits(std::span<const double> x) {
  charge(x);
  return evaluate(x);
}

std::vector<double> BudgetSlice::logits(std::span<const double> x) {
  if (!ledger_.try_charge()) throw BudgetExhausted(ledger_.budget());
  try {
    return inner_.logits(x);
  } catch (...) {
    ledger_.refund();
    throw;
  }
}

double BudgetSlice::loss(std::span<const double> x, std::size_t target) {
  if (!ledger_.try_charge()) throw BudgetExhausted(ledger_.budget());
  try {
    return inner_.loss(x, target);
  } catch (...) {
    ledger_.refund();
    throw;
  }
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) throw std::invalid_argument("cross_entropy: target out of range");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - peak);
  return peak + std::log(sum) - logits[target];
}

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmax: empty scores");
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

std::size_t argmin(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("argmin: empty scores");
  return static_cast<std::size_t>(std::min_element(scores.begin(), scores.end()) - scores.begin());
}

double loss_at_target(Oracle& oracle, std::span<const double> x, std::size_t target) {
  if (target >= oracle.num_classes()) throw std::invalid_argument("loss_at_target: bad target");
  return oracle.loss(x, target);
}

std::size_t least_likely_class(Oracle& oracle, std::span<const double> x) {
  return argmin(oracle.logits(x));
}

std::size_t predicted_class(Oracle& oracle, std::span<const double> x) {
  return argmax(oracle.logits(x));
}

}  // namespace zog
