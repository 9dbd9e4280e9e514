#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zog/attack.hpp"
#include "zog/mlp.hpp"
#include "zog/oracle.hpp"

namespace zog {

/// A direction distribution plus sidedness, e.g. "spsa2" or "nes1".
struct Method {
  DirectionKind kind = DirectionKind::Rademacher;
  Sidedness sidedness = Sidedness::TwoSided;

  std::string label() const;  // "spsa2"
  static Method parse(std::string_view label);  // throws std::invalid_argument
  bool operator==(const Method&) const = default;
};

/// The four estimators compared in the reference grid.
std::vector<Method> reference_methods();
std::vector<double> reference_deltas();

/// Builds a fresh oracle (fresh ledger) for one attack run.
using OracleFactory = std::function<std::unique_ptr<Oracle>()>;

struct ExperimentSpec {
  OracleFactory make_oracle;
  std::vector<Probe> probes;
  std::vector<Method> methods;
  std::vector<double> deltas;
  /// Template for every run; estimator kind, sidedness and delta are
  /// overwritten per cell.
  AttackConfig attack;
  std::uint64_t seed = 0;
  /// Concurrent attack runs. Results never depend on this.
  std::size_t workers = 1;

  void validate() const;
};

/// Order-independent probe identity: SplitMix64 fold over the bit patterns
/// of the features, then the label.
std::uint64_t probe_key(const Probe& probe) noexcept;

/// Seed for one attack run: split_seed(master, {probe_key, method_key, delta bits}),
/// method_key = 2 * kind + (two-sided ? 1 : 0). Every coordinate is keyed on
/// content, so results do not depend on list order and any cell re-runs alone.
std::uint64_t cell_seed(std::uint64_t master, std::uint64_t probe_key, const Method& method, double delta) noexcept;

struct ReportRow {
  std::string method;  // "nes" | "spsa" | "rdsa"
  int sidedness = 2;   // 1 or 2
  double delta = 0.0;
  double success_rate_pct = 0.0;
  std::optional<std::uint64_t> median_queries_succ;
  std::uint64_t median_queries_all = 0;
  std::size_t n_probes = 0;
  std::size_t n_samples = 0;
  double step_size = 0.0;
  double epsilon = 0.0;
  std::uint64_t budget = 0;
  std::uint64_t seed = 0;

  bool operator==(const ReportRow&) const = default;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  bool operator==(const ExperimentReport&) const = default;
};

struct CellResult {
  Method method;
  double delta = 0.0;
  std::vector<AttackOutcome> outcomes;  // probe order
};

/// Runs every (method, delta, probe) attack; rows come out method-major,
/// then delta, in spec order.
ExperimentReport run_experiment(const ExperimentSpec& spec, std::vector<CellResult>* cells = nullptr);

enum class MedianMode { Successes, AllCapped };

/// Lower-central median of the outcome query counts. Successes mode ignores
/// failures (empty result if none succeeded); AllCapped counts each failure
/// at `budget`. Throws std::invalid_argument on an empty list.
std::optional<std::uint64_t> median_queries(std::span<const AttackOutcome> outcomes, MedianMode mode,
                                            std::uint64_t budget);

enum class ReportFormat { Csv, Json };

inline constexpr const char* kReportColumns =
    "method,sidedness,delta,success_rate_pct,median_queries_succ,median_queries_all,"
    "n_probes,n_samples,step_size,epsilon,budget,seed";

std::string render_report(const ExperimentReport& report, ReportFormat format);
ExperimentReport parse_report(const std::string& text, ReportFormat format);
void write_report(const ExperimentReport& report, ReportFormat format, const std::filesystem::path& dest);
ExperimentReport read_report(const std::filesystem::path& src, ReportFormat format);

}  // namespace zog
