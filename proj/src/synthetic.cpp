#include "zog/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace zog {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t classes_of(const SoftmaxRegression& s) { return s.bias.size(); }

std::vector<double> softmax_logits(const SoftmaxRegression& s, std::span<const double> x) {
  const std::size_t k = classes_of(s);
  const std::size_t d = x.size();
  std::vector<double> z(s.bias);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < d; ++j) z[c] += s.w[c * d + j] * x[j];
  }
  return z;
}

void check_dim(const SyntheticObjective& obj, std::span<const double> x) {
  if (x.size() != objective_dim(obj)) throw std::invalid_argument("synthetic objective: dimension mismatch");
}

}  // namespace

std::size_t objective_dim(const SyntheticObjective& obj) {
  return std::visit(Overloaded{
                        [](const LinearObjective& o) { return o.g.size(); },
                        [](const QuadraticObjective& o) { return o.b.size(); },
                        [](const CubicObjective& o) { return o.c.size(); },
                        [](const SoftmaxRegression& o) {
                          return o.bias.empty() ? std::size_t{0} : o.w.size() / o.bias.size();
                        },
                    },
                    obj);
}

std::string_view objective_name(const SyntheticObjective& obj) {
  return std::visit(Overloaded{
                        [](const LinearObjective&) { return std::string_view("linear"); },
                        [](const QuadraticObjective&) { return std::string_view("quadratic"); },
                        [](const CubicObjective&) { return std::string_view("cubic"); },
                        [](const SoftmaxRegression&) { return std::string_view("softmax"); },
                    },
                    obj);
}

double objective_value(const SyntheticObjective& obj, std::span<const double> x) {
  check_dim(obj, x);
  const std::size_t d = x.size();
  return std::visit(Overloaded{
                        [&](const LinearObjective& o) {
                          double s = 0.0;
                          for (std::size_t j = 0; j < d; ++j) s += o.g[j] * x[j];
                          return s;
                        },
                        [&](const QuadraticObjective& o) {
                          double s = 0.0;
                          for (std::size_t i = 0; i < d; ++i) {
                            double row = 0.0;
                            for (std::size_t j = 0; j < d; ++j) row += o.a[i * d + j] * x[j];
                            s += x[i] * row + o.b[i] * x[i];
                          }
                          return s;
                        },
                        [&](const CubicObjective& o) {
                          double s = 0.0;
                          for (std::size_t j = 0; j < d; ++j) s += o.c[j] * x[j] * x[j] * x[j];
                          return s;
                        },
                        [&](const SoftmaxRegression& o) {
                          return cross_entropy(softmax_logits(o, x), o.target);
                        },
                    },
                    obj);
}

std::vector<double> analytic_gradient(const SyntheticObjective& obj, std::span<const double> x) {
  check_dim(obj, x);
  const std::size_t d = x.size();
  return std::visit(Overloaded{
                        [&](const LinearObjective& o) { return o.g; },
                        [&](const QuadraticObjective& o) {
                          // (A + A^T) x + b
                          std::vector<double> g(o.b);
                          for (std::size_t i = 0; i < d; ++i) {
                            for (std::size_t j = 0; j < d; ++j) {
                              g[i] += (o.a[i * d + j] + o.a[j * d + i]) * x[j];
                            }
                          }
                          return g;
                        },
                        [&](const CubicObjective& o) {
                          std::vector<double> g(d);
                          for (std::size_t j = 0; j < d; ++j) g[j] = 3.0 * o.c[j] * x[j] * x[j];
                          return g;
                        },
                        [&](const SoftmaxRegression& o) {
                          // W^T (softmax(z) - onehot(target))
                          auto z = softmax_logits(o, x);
                          const double peak = *std::max_element(z.begin(), z.end());
                          double sum = 0.0;
                          for (auto& v : z) {
                            v = std::exp(v - peak);
                            sum += v;
                          }
                          for (auto& v : z) v /= sum;
                          z[o.target] -= 1.0;
                          std::vector<double> g(d, 0.0);
                          for (std::size_t c = 0; c < z.size(); ++c) {
                            for (std::size_t j = 0; j < d; ++j) g[j] += o.w[c * d + j] * z[c];
                          }
                          return g;
                        },
                    },
                    obj);
}

DiagnosticProblem make_diagnostic_problem(std::string_view name, std::size_t d, std::uint64_t seed,
                                          double point_scale) {
  if (d == 0) throw std::invalid_argument("diagnostic problem: dimension must be >= 1");
  Rng rng(seed);
  const auto sym = [&](double half_width) { return half_width * rng.uniform_symmetric(); };
  DiagnosticProblem p;
  if (name == "linear") {
    LinearObjective o;
    for (std::size_t j = 0; j < d; ++j) o.g.push_back(sym(2.0));
    p.objective = std::move(o);
  } else if (name == "quadratic") {
    QuadraticObjective o;
    for (std::size_t k = 0; k < d * d; ++k) o.a.push_back(sym(1.0));
    for (std::size_t j = 0; j < d; ++j) o.b.push_back(sym(1.0));
    p.objective = std::move(o);
  } else if (name == "cubic") {
    CubicObjective o;
    for (std::size_t j = 0; j < d; ++j) o.c.push_back(sym(2.0));
    p.objective = std::move(o);
  } else if (name == "softmax") {
    SoftmaxRegression o;
    for (std::size_t k = 0; k < 3 * d; ++k) o.w.push_back(rng.gaussian());
    o.bias.assign(3, 0.0);
    p.objective = std::move(o);
  } else {
    throw std::invalid_argument("unknown objective '" + std::string(name) +
                                "' (expected linear|quadratic|cubic|softmax)");
  }
  for (std::size_t j = 0; j < d; ++j) p.x.push_back(point_scale * rng.uniform_symmetric());
  return p;
}

SyntheticOracle::SyntheticOracle(SyntheticObjective objective, std::uint64_t budget)
    : LocalOracle(budget), objective_(std::move(objective)), dim_(objective_dim(objective_)), classes_(1) {
  if (dim_ == 0) throw std::invalid_argument("SyntheticOracle: objective has zero dimension");
  if (const auto* s = std::get_if<SoftmaxRegression>(&objective_)) {
    classes_ = classes_of(*s);
    if (s->w.size() != classes_ * dim_ || s->target >= classes_) {
      throw std::invalid_argument("SyntheticOracle: inconsistent softmax regression");
    }
  } else if (const auto* q = std::get_if<QuadraticObjective>(&objective_)) {
    if (q->a.size() != dim_ * dim_) throw std::invalid_argument("SyntheticOracle: A must be d x d");
  }
}

std::vector<double> SyntheticOracle::evaluate(std::span<const double> x) const {
  if (const auto* s = std::get_if<SoftmaxRegression>(&objective_)) return softmax_logits(*s, x);
  return {objective_value(objective_, x)};
}

double SyntheticOracle::loss(std::span<const double> x, std::size_t target) {
  if (std::holds_alternative<SoftmaxRegression>(objective_)) {
    if (target >= classes_) throw std::invalid_argument("SyntheticOracle::loss: bad target");
    return cross_entropy(logits(x), target);
  }
  charge(x);
  return objective_value(objective_, x);
}

std::vector<double> SyntheticOracle::true_gradient(std::span<const double> x, std::size_t target) const {
  if (const auto* s = std::get_if<SoftmaxRegression>(&objective_)) {
    SoftmaxRegression retargeted = *s;
    retargeted.target = target;
    return analytic_gradient(retargeted, x);
  }
  return analytic_gradient(objective_, x);
}

}  // namespace zog
