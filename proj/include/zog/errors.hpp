#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace zog {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an oracle refuses an evaluation because its ledger is full.
/// The model is never consulted for a refused query.
class BudgetExhausted : public Error {
 public:
  explicit BudgetExhausted(std::uint64_t budget)
      : Error("query budget exhausted (" + std::to_string(budget) + ")"), budget_(budget) {}
  std::uint64_t budget() const noexcept { return budget_; }

 private:
  std::uint64_t budget_;
};

/// A gradient estimate that stopped part way because the oracle refused a probe.
class EstimateAborted : public BudgetExhausted {
 public:
  EstimateAborted(std::uint64_t budget, std::uint64_t spent)
      : BudgetExhausted(budget), spent_(spent) {}
  std::uint64_t queries_spent() const noexcept { return spent_; }

 private:
  std::uint64_t spent_;
};

/// Connection, framing or protocol failure talking to a remote oracle.
class TransportError : public Error {
 public:
  using Error::Error;
};

enum class ModelErrorKind { MalformedHeader, DimensionMismatch, NonFiniteWeight };

class ModelFormatError : public Error {
 public:
  ModelFormatError(ModelErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  ModelErrorKind kind() const noexcept { return kind_; }

 private:
  ModelErrorKind kind_;
};

}  // namespace zog
