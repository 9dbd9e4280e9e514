#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "zog/errors.hpp"
#include "zog/mlp.hpp"
#include "zog/oracle.hpp"
#include "zog/synthetic.hpp"

using namespace zog;

namespace {

std::shared_ptr<const MlpModel> identity_model(std::size_t d) {
  DenseLayer layer;
  layer.inputs = layer.outputs = d;
  layer.weights.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) layer.weights[i * d + i] = 1.0;
  layer.bias.assign(d, 0.0);
  return std::make_shared<const MlpModel>(std::vector<DenseLayer>{layer});
}

/// Returns fixed logits; used to pin down the loss and argmin rules.
class FixedLogits final : public LocalOracle {
 public:
  explicit FixedLogits(std::vector<double> z) : z_(std::move(z)) {}
  std::size_t input_dim() const override { return 1; }
  std::size_t num_classes() const override { return z_.size(); }

 protected:
  std::vector<double> evaluate(std::span<const double>) const override { return z_; }

 private:
  std::vector<double> z_;
};

ModelErrorKind load_error(std::span<const std::uint8_t> bytes) {
  try {
    load_mlp(bytes);
  } catch (const ModelFormatError& e) {
    return e.kind();
  }
  FAIL("expected ModelFormatError");
  return ModelErrorKind::MalformedHeader;
}

}  // namespace

TEST_CASE("identity network returns its input as logits") {
  MlpOracle oracle(identity_model(2));
  const std::vector<double> x{0.3, 0.7};
  CHECK(oracle.logits(x) == x);
  CHECK(oracle.logits(x) == oracle.logits(x));
  CHECK(oracle.ledger().used() == 3);
}

TEST_CASE("ledger refuses past budget without evaluating") {
  MlpOracle oracle(identity_model(2), 5);
  const std::vector<double> x{0.1, 0.2};
  for (int i = 0; i < 5; ++i) oracle.logits(x);
  CHECK_THROWS_AS(oracle.logits(x), BudgetExhausted);
  CHECK(oracle.ledger().used() == 5);
  CHECK_THROWS_AS(oracle.logits(std::vector<double>{1.0}), std::invalid_argument);
  CHECK(oracle.ledger().used() == 5);
}

TEST_CASE("ledger is linearizable under contention") {
  MlpOracle oracle(identity_model(2), 1000);
  std::atomic<int> served{0};
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < 8; ++t) {
      pool.emplace_back([&] {
        const std::vector<double> x{0.5, 0.5};
        for (int i = 0; i < 200; ++i) {
          try {
            oracle.logits(x);
            ++served;
          } catch (const BudgetExhausted&) {
          }
        }
      });
    }
  }
  CHECK(served.load() == 1000);
  CHECK(oracle.ledger().used() == 1000);
}

TEST_CASE("budget slice refunds a reservation the inner oracle refused") {
  MlpOracle inner(identity_model(2), 2);
  BudgetSlice slice(inner, 10);
  const std::vector<double> x{0.1, 0.2};
  slice.logits(x);
  slice.logits(x);
  CHECK_THROWS_AS(slice.logits(x), BudgetExhausted);
  CHECK(slice.ledger().used() == 2);
  CHECK(inner.ledger().used() == 2);
}

TEST_CASE("cross-entropy loss") {
  CHECK(cross_entropy(std::vector<double>{0, 0}, 0) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(cross_entropy(std::vector<double>{1000, 0}, 0) == doctest::Approx(0.0));
  CHECK(std::isfinite(cross_entropy(std::vector<double>{1e4, -1e4}, 1)));
  CHECK(cross_entropy(std::vector<double>{1, 2, 3}, 2) == doctest::Approx(0.40760596444438013).epsilon(1e-15));
  FixedLogits oracle({1, 2, 3});
  CHECK(loss_at_target(oracle, std::vector<double>{0.0}, 2) == doctest::Approx(0.40760596444438013));
  CHECK(oracle.ledger().used() == 1);
  CHECK_THROWS_AS(loss_at_target(oracle, std::vector<double>{0.0}, 3), std::invalid_argument);
}

TEST_CASE("least likely class with lowest-index ties") {
  const std::vector<double> x{0.0};
  FixedLogits a({1, 2, 3}), b({5, 5, 1}), c({2, 2});
  CHECK(least_likely_class(a, x) == 0);
  CHECK(least_likely_class(b, x) == 2);
  CHECK(least_likely_class(c, x) == 0);
  CHECK(a.ledger().used() == 1);
}

TEST_CASE("mlp save/load round trip is bit exact") {
  const std::vector<std::size_t> dims{6, 5};
  const auto bench = gen_model(dims, 4, 0, 17);
  const auto bytes = save_mlp(bench.model);
  const auto loaded = load_mlp(bytes);
  CHECK(loaded == bench.model);
  CHECK(save_mlp(loaded) == bytes);
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> x(6);
    for (auto& v : x) v = rng.uniform01();
    CHECK(loaded.forward(x) == bench.model.forward(x));
  }
}

TEST_CASE("mlp header layout") {
  const std::vector<std::size_t> dims{2};
  const auto bytes = save_mlp(gen_model(dims, 3, 0, 1).model);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "ZOGMLP1\n");
  // L = 1, dims 2 and 3, little-endian.
  CHECK(std::vector<std::uint8_t>(bytes.begin() + 8, bytes.begin() + 20) ==
        std::vector<std::uint8_t>{1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0});
  CHECK(bytes.size() == 20 + 8 * (2 * 3 + 3));
}

TEST_CASE("mlp load errors are distinct") {
  const std::vector<std::size_t> dims{3, 4};
  auto bytes = save_mlp(gen_model(dims, 2, 0, 9).model);

  SUBCASE("truncated file") {
    CHECK(load_error(std::span(bytes).first(10)) == ModelErrorKind::MalformedHeader);
    CHECK(load_error(std::span(bytes).first(14)) == ModelErrorKind::MalformedHeader);
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK(load_error(bytes) == ModelErrorKind::MalformedHeader);
  }
  SUBCASE("payload shorter than header implies") {
    bytes.pop_back();
    CHECK(load_error(bytes) == ModelErrorKind::DimensionMismatch);
  }
  SUBCASE("nan weight") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const auto bits = std::bit_cast<std::uint64_t>(nan);
    for (int i = 0; i < 8; ++i) bytes[24 + i] = static_cast<std::uint8_t>(bits >> (8 * i));
    CHECK(load_error(bytes) == ModelErrorKind::NonFiniteWeight);
  }
  SUBCASE("inconsistent layer chain") {
    DenseLayer a{2, 3, std::vector<double>(6, 0.0), std::vector<double>(3, 0.0)};
    DenseLayer b{4, 1, std::vector<double>(4, 0.0), std::vector<double>(1, 0.0)};
    CHECK_THROWS_AS(MlpModel({a, b}), ModelFormatError);
  }
}

TEST_CASE("gen_model is deterministic and labels probes by argmax") {
  const std::vector<std::size_t> dims{8, 6};
  const auto a = gen_model(dims, 5, 50, 3);
  const auto b = gen_model(dims, 5, 50, 3);
  CHECK(save_mlp(a.model) == save_mlp(b.model));
  CHECK(a.probes == b.probes);
  CHECK(a.probes.size() == 50);
  for (const auto& p : a.probes) {
    for (double v : p.x) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(p.label == argmax(a.model.forward(p.x)));
  }
  const std::vector<std::size_t> linear{8};
  CHECK(gen_model(linear, 5, 1, 3).model.layers().size() == 1);
}

TEST_CASE("probe text format round trips") {
  const std::vector<std::size_t> dims{4};
  const auto bench = gen_model(dims, 3, 10, 8);
  const auto text = format_probes(bench.probes);
  CHECK(parse_probes(text) == bench.probes);
  CHECK(parse_probes("0.5,0.25,1\n")[0] == Probe{{0.5, 0.25}, 1});
  CHECK_THROWS_AS(parse_probes("0.5,abc,1\n"), Error);
  CHECK_THROWS_AS(parse_probes("0.5,1\n0.5,0.5,1\n"), Error);
}

namespace {

/// Central finite differences, written independently of the analytic gradients.
std::vector<double> central_difference(const SyntheticObjective& obj, std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double keep = x[j];
    x[j] = keep + h;
    const double up = objective_value(obj, x);
    x[j] = keep - h;
    const double down = objective_value(obj, x);
    x[j] = keep;
    g[j] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("synthetic gradients match central differences") {
  for (const char* name : {"linear", "quadratic", "cubic", "softmax"}) {
    CAPTURE(name);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto p = make_diagnostic_problem(name, 5, seed);
      const auto analytic = analytic_gradient(p.objective, p.x);
      const auto numeric = central_difference(p.objective, p.x, 1e-6);
      double diff = 0.0, norm = 0.0;
      for (std::size_t j = 0; j < analytic.size(); ++j) {
        diff += (analytic[j] - numeric[j]) * (analytic[j] - numeric[j]);
        norm += analytic[j] * analytic[j];
      }
      CHECK(std::sqrt(diff) <= 1e-5 * std::max(1.0, std::sqrt(norm)));
    }
  }
}

TEST_CASE("synthetic oracle metering and shape") {
  SyntheticOracle lin(LinearObjective{{1.0, 2.0}});
  CHECK(lin.num_classes() == 1);
  CHECK(lin.loss(std::vector<double>{1.0, 1.0}, 0) == 3.0);
  CHECK(lin.logits(std::vector<double>{1.0, 1.0}) == std::vector<double>{3.0});
  CHECK(lin.ledger().used() == 2);

  SoftmaxRegression s{{1, 0, -1, 0}, {0, 0}, 1};
  SyntheticOracle soft(s);
  CHECK(soft.num_classes() == 2);
  CHECK(soft.logits(std::vector<double>{0.3, 0.2}) == std::vector<double>{0.3, -0.3});
  CHECK(soft.loss(std::vector<double>{0.0, 0.0}, 1) == doctest::Approx(std::log(2.0)));
  CHECK(soft.ledger().used() == 2);
  CHECK_THROWS_AS(make_diagnostic_problem("sphere", 3, 0), std::invalid_argument);
}
