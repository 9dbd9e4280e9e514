#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "zog/attack.hpp"
#include "zog/mlp.hpp"
#include "zog/synthetic.hpp"

using namespace zog;

TEST_CASE("project_linf") {
  const std::vector<double> x0{0.5, 0.5};
  const auto p = project_linf(std::vector<double>{0.58, 0.5}, x0, 0.05);
  CHECK(p[0] == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(p[1] == 0.5);
  const std::vector<double> inside{0.52, 0.47};
  CHECK(project_linf(inside, x0, 0.05) == inside);
}

TEST_CASE("project_linf is idempotent and never exceeds epsilon") {
  Rng rng(8);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> x(4), x0(4);
    for (auto& v : x) v = 2.0 * rng.uniform_symmetric();
    for (auto& v : x0) v = rng.uniform01();
    const double eps = 0.3 * rng.uniform01();
    const auto once = project_linf(x, x0, eps);
    CHECK(project_linf(once, x0, eps) == once);
    CHECK(linf_distance(once, x0) <= eps);
  }
}

TEST_CASE("pgd_step") {
  AttackConfig cfg;
  cfg.epsilon = 0.05;
  cfg.step_size = 0.02;
  const std::vector<double> x0{0.5, 0.5};
  SUBCASE("signed step") {
    const auto next = pgd_step(x0, std::vector<double>{0.3, -0.7}, x0, cfg);
    CHECK(next[0] == doctest::Approx(0.48).epsilon(1e-15));
    CHECK(next[1] == doctest::Approx(0.52).epsilon(1e-15));
  }
  SUBCASE("zero gradient keeps the point") {
    CHECK(pgd_step(x0, std::vector<double>{0.0, 0.0}, x0, cfg) == x0);
  }
  SUBCASE("domain clip") {
    const std::vector<double> corner{0.0, 1.0};
    const auto next = pgd_step(corner, std::vector<double>{1.0, -1.0}, corner, cfg);
    CHECK(next == corner);
  }
}

namespace {

/// Two classes split by the sign of x_0: logits (x_0, -x_0).
SyntheticOracle separating_oracle() {
  SoftmaxRegression s;
  s.w = {1, 0, -1, 0};
  s.bias = {0, 0};
  return SyntheticOracle(s);
}

AttackConfig unconstrained(double eps, double step) {
  AttackConfig cfg;
  cfg.epsilon = eps;
  cfg.step_size = step;
  cfg.clip_lo.reset();
  cfg.clip_hi.reset();
  cfg.estimator.samples = 4;
  return cfg;
}

}  // namespace

TEST_CASE("attack crosses a linear boundary") {
  // From x0 = (0.3, 0.2) class 1 needs x_0 < 0: minimal L-inf move is 0.3.
  auto oracle = separating_oracle();
  const std::vector<double> x0{0.3, 0.2};
  Rng rng(1);
  const auto out = run_attack(oracle, x0, unconstrained(0.5, 0.05), rng);
  CHECK(out.target == 1);
  REQUIRE(out.success);
  CHECK(out.linf_dist <= 0.5);
  CHECK(out.linf_dist > 0.3);
  CHECK(out.x_adv[0] < 0.0);
  CHECK(argmax(separating_oracle().logits(out.x_adv)) == 1);
  CHECK(out.queries == oracle.ledger().used());
  CHECK(out.queries == planned_queries(unconstrained(0.5, 0.05), out.iterations));
}

TEST_CASE("epsilon 0 never moves") {
  auto oracle = separating_oracle();
  const std::vector<double> x0{0.3, 0.2};
  Rng rng(1);
  auto cfg = unconstrained(0.0, 0.05);
  const auto fail = run_attack(oracle, x0, cfg, rng);
  CHECK_FALSE(fail.success);
  CHECK(fail.iterations == 0);
  CHECK(fail.x_adv == x0);
  CHECK(fail.failure_reason == FailureReason::IterationCap);
  const auto already = run_attack(oracle, x0, cfg, rng, std::size_t{0});
  CHECK(already.success);
  CHECK(already.queries == 1);
}

TEST_CASE("tiny budget fails on the first estimate") {
  auto oracle = separating_oracle();
  auto cfg = unconstrained(0.5, 0.05);
  cfg.estimator.samples = 50;
  cfg.budget = 3;
  Rng rng(1);
  const auto out = run_attack(oracle, std::vector<double>{0.3, 0.2}, cfg, rng);
  CHECK_FALSE(out.success);
  CHECK(out.failure_reason == FailureReason::Budget);
  CHECK(out.queries == 3);
  CHECK(oracle.ledger().used() == 3);
}

TEST_CASE("iteration cap") {
  auto oracle = separating_oracle();
  auto cfg = unconstrained(0.5, 0.01);
  cfg.max_iterations = 3;
  Rng rng(1);
  const auto out = run_attack(oracle, std::vector<double>{0.3, 0.2}, cfg, rng);
  CHECK_FALSE(out.success);
  CHECK(out.failure_reason == FailureReason::IterationCap);
  CHECK(out.iterations == 3);
  CHECK(out.queries == planned_queries(cfg, 3));
}

TEST_CASE("attack is deterministic and keeps every run inside the ball") {
  const std::vector<std::size_t> dims{16, 8};
  const auto bench = gen_model(dims, 4, 6, 11);
  auto model = std::make_shared<const MlpModel>(bench.model);
  for (const auto& probe : bench.probes) {
    AttackConfig cfg;
    cfg.budget = 20'000;
    MlpOracle a(model), b(model);
    Rng ra(5), rb(5);
    const auto oa = run_attack(a, probe.x, cfg, ra);
    const auto ob = run_attack(b, probe.x, cfg, rb);
    CHECK(oa == ob);
    CHECK(oa.linf_dist <= cfg.epsilon);
    for (double v : oa.x_adv) CHECK((v >= 0.0 && v <= 1.0));
    if (oa.success) CHECK(argmax(model->forward(oa.x_adv)) == oa.target);
  }
}

TEST_CASE("config validation") {
  AttackConfig cfg;
  cfg.step_size = 0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.step_size = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = AttackConfig{};
  cfg.epsilon = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  auto oracle = separating_oracle();
  Rng rng(1);
  // x0 outside the default [0, 1] box
  CHECK_THROWS_AS(run_attack(oracle, std::vector<double>{1.5, 0.0}, AttackConfig{}, rng), std::invalid_argument);
}
