#include "zog/estimator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "zog/errors.hpp"
#include "zog/synthetic.hpp"

namespace zog {

namespace {

Point offset(std::span<const double> x, std::span<const double> dir, double scale) {
  Point p(x.begin(), x.end());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] += scale * dir[j];
  return p;
}

/// Difference quotients q_i for each direction, in sample order.
std::vector<double> difference_quotients(Oracle& oracle, std::span<const double> x, std::size_t target,
                                         const EstimatorConfig& cfg,
                                         std::span<const std::vector<double>> directions,
                                         std::uint64_t& spent) {
  const std::size_t n = directions.size();
  std::vector<double> quotients(n);
  std::atomic<std::uint64_t> served{0};
  std::atomic<bool> refused{false};
  const double delta = cfg.delta;

  double base = 0.0;
  if (cfg.sidedness == Sidedness::OneSided) {
    try {
      base = oracle.loss(x, target);
      served.fetch_add(1);
    } catch (const BudgetExhausted&) {
      spent = 0;
      throw EstimateAborted(oracle.ledger().budget(), 0);
    }
  }

  auto probe = [&](std::size_t i) {
    if (refused.load(std::memory_order_relaxed)) return;
    try {
      const auto plus = offset(x, directions[i], delta);
      const double f_plus = oracle.loss(plus, target);
      served.fetch_add(1);
      if (cfg.sidedness == Sidedness::OneSided) {
        quotients[i] = (f_plus - base) / delta;
      } else {
        const auto minus = offset(x, directions[i], -delta);
        const double f_minus = oracle.loss(minus, target);
        served.fetch_add(1);
        quotients[i] = (f_plus - f_minus) / (2.0 * delta);
      }
    } catch (const BudgetExhausted&) {
      refused.store(true);
    }
  };

  const std::size_t workers = oracle.concurrency_safe() ? std::min(cfg.workers, n) : 1;
  if (workers <= 1) {
    for (std::size_t i = 0; i < n && !refused.load(); ++i) probe(i);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) probe(i);
      });
    }
  }

  spent = served.load();
  if (refused.load()) throw EstimateAborted(oracle.ledger().budget(), spent);
  return quotients;
}

}  // namespace

void EstimatorConfig::validate() const {
  if (samples == 0) throw std::invalid_argument("estimator: samples must be >= 1");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("estimator: delta must be > 0");
  if (!(reciprocal_cap > 0.0)) throw std::invalid_argument("estimator: reciprocal cap must be > 0");
}

std::uint64_t query_cost(const EstimatorConfig& cfg) noexcept {
  return cfg.sidedness == Sidedness::TwoSided ? 2 * std::uint64_t{cfg.samples}
                                              : std::uint64_t{cfg.samples} + 1;
}

GradientEstimate estimate_gradient_along(Oracle& oracle, std::span<const double> x, std::size_t target,
                                         const EstimatorConfig& cfg,
                                         std::span<const std::vector<double>> directions) {
  if (directions.empty()) throw std::invalid_argument("estimator: empty direction set");
  if (!(cfg.delta > 0.0)) throw std::invalid_argument("estimator: delta must be > 0");
  if (x.size() != oracle.input_dim()) throw std::invalid_argument("estimator: point dimension mismatch");
  for (const auto& dir : directions) {
    if (dir.size() != x.size()) throw std::invalid_argument("estimator: direction dimension mismatch");
  }

  GradientEstimate out;
  const auto quotients = difference_quotients(oracle, x, target, cfg, directions, out.queries_used);

  out.grad.assign(x.size(), 0.0);
  for (std::size_t i = 0; i < directions.size(); ++i) {
    const auto xi = xi_from_delta(cfg.kind, directions[i], cfg.reciprocal_cap);
    for (std::size_t j = 0; j < xi.size(); ++j) out.grad[j] += quotients[i] * xi[j];
  }
  const double inv_n = 1.0 / static_cast<double>(directions.size());
  for (auto& g : out.grad) g *= inv_n;
  return out;
}

GradientEstimate estimate_gradient(Oracle& oracle, std::span<const double> x, std::size_t target,
                                   const EstimatorConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<std::vector<double>> directions;
  directions.reserve(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) directions.push_back(sample_direction(cfg.kind, x.size(), rng));
  return estimate_gradient_along(oracle, x, target, cfg, directions);
}

EstimatorDiagnostics estimator_diagnostics(Oracle& oracle, std::span<const double> x, std::size_t target,
                                           const EstimatorConfig& cfg, std::size_t trials, Rng& rng) {
  const auto* analytic = dynamic_cast<const GradientOracle*>(&oracle);
  if (analytic == nullptr) throw std::invalid_argument("estimator diagnostics need an analytic gradient");
  if (trials == 0) throw std::invalid_argument("estimator diagnostics: trials must be >= 1");

  const auto truth = analytic->true_gradient(x, target);
  double truth_norm = 0.0;
  for (double v : truth) truth_norm += v * v;
  truth_norm = std::sqrt(truth_norm);

  EstimatorDiagnostics out;
  std::vector<double> mean(x.size(), 0.0);
  double cosine_sum = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto est = estimate_gradient(oracle, x, target, cfg, rng);
    out.queries += est.queries_used;
    double dot = 0.0;
    double norm = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      mean[j] += est.grad[j];
      dot += est.grad[j] * truth[j];
      norm += est.grad[j] * est.grad[j];
    }
    if (norm > 0.0 && truth_norm > 0.0) cosine_sum += dot / (std::sqrt(norm) * truth_norm);
  }
  double err = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double diff = mean[j] / static_cast<double>(trials) - truth[j];
    err += diff * diff;
  }
  out.avg_error = std::sqrt(err);
  if (truth_norm > 0.0) out.mean_cosine = cosine_sum / static_cast<double>(trials);
  return out;
}

BiasProfile bias_profile(Oracle& oracle, std::span<const double> x, std::size_t target,
                         const EstimatorConfig& cfg, std::span<const std::vector<double>> directions) {
  const auto* analytic = dynamic_cast<const GradientOracle*>(&oracle);
  if (analytic == nullptr) throw std::invalid_argument("bias profile needs an analytic gradient");
  if (directions.empty()) throw std::invalid_argument("bias profile: empty direction set");
  const auto truth = analytic->true_gradient(x, target);

  std::uint64_t spent = 0;
  const auto quotients = difference_quotients(oracle, x, target, cfg, directions, spent);

  const std::size_t d = x.size();
  BiasProfile out;
  out.expectation_bias.assign(d, 0.0);
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    const auto xi = xi_from_delta(cfg.kind, directions[i], cfg.reciprocal_cap);
    double directional = 0.0;
    for (std::size_t j = 0; j < d; ++j) directional += truth[j] * directions[i][j];
    const double truncation = quotients[i] - directional;
    double norm_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out.expectation_bias[j] += quotients[i] * xi[j];
      norm_sq += truncation * xi[j] * truncation * xi[j];
    }
    sq_sum += norm_sq;
  }
  const double inv_n = 1.0 / static_cast<double>(directions.size());
  for (std::size_t j = 0; j < d; ++j) out.expectation_bias[j] = out.expectation_bias[j] * inv_n - truth[j];
  out.truncation_rms = std::sqrt(sq_sum * inv_n);
  return out;
}

double loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw std::invalid_argument("loglog_slope: values must be positive");
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace zog
