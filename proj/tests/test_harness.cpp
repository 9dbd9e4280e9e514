#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include "zog/errors.hpp"
#include "zog/harness.hpp"

using namespace zog;

namespace {

AttackOutcome outcome(bool success, std::uint64_t queries) {
  AttackOutcome o;
  o.success = success;
  o.queries = queries;
  return o;
}

ExperimentSpec small_spec(std::vector<Probe> probes, std::shared_ptr<const MlpModel> model) {
  ExperimentSpec spec;
  spec.make_oracle = [model] { return std::make_unique<MlpOracle>(model); };
  spec.probes = std::move(probes);
  spec.methods = reference_methods();
  spec.deltas = reference_deltas();
  spec.attack.budget = 20'000;
  spec.attack.estimator.samples = 10;
  spec.seed = 3;
  return spec;
}

std::shared_ptr<const MlpModel> small_model(std::vector<Probe>* probes) {
  const std::vector<std::size_t> dims{12, 8};
  auto bench = gen_model(dims, 4, 6, 21);
  if (probes) *probes = bench.probes;
  return std::make_shared<const MlpModel>(std::move(bench.model));
}

}  // namespace

TEST_CASE("median_queries") {
  const std::vector<AttackOutcome> odd{outcome(true, 100), outcome(true, 300), outcome(true, 200)};
  CHECK(median_queries(odd, MedianMode::Successes, 1'000'000) == 200);
  CHECK(median_queries(odd, MedianMode::AllCapped, 1'000'000) == 200);

  const std::vector<AttackOutcome> even{outcome(true, 100), outcome(true, 200), outcome(true, 300),
                                        outcome(true, 400)};
  CHECK(median_queries(even, MedianMode::Successes, 1'000'000) == 200);

  const std::vector<AttackOutcome> mixed{outcome(true, 100), outcome(false, 1'000'000)};
  CHECK(median_queries(mixed, MedianMode::Successes, 1'000'000) == 100);
  CHECK(median_queries(mixed, MedianMode::AllCapped, 1'000'000) == 100);

  const std::vector<AttackOutcome> none{outcome(false, 7), outcome(false, 9)};
  CHECK_FALSE(median_queries(none, MedianMode::Successes, 50).has_value());
  CHECK(median_queries(none, MedianMode::AllCapped, 50) == 50);
  CHECK_THROWS_AS(median_queries(std::vector<AttackOutcome>{}, MedianMode::Successes, 1), std::invalid_argument);
}

TEST_CASE("method labels") {
  CHECK(Method::parse("spsa1") == Method{DirectionKind::Rademacher, Sidedness::OneSided});
  CHECK(Method::parse("nes2").label() == "nes2");
  CHECK_THROWS_AS(Method::parse("spsa3"), std::invalid_argument);
  CHECK_THROWS_AS(Method::parse("foo2"), std::invalid_argument);
}

TEST_CASE("reference grid yields twelve rows in method-major order") {
  std::vector<Probe> probes;
  auto model = small_model(&probes);
  const auto report = run_experiment(small_spec(probes, model));
  REQUIRE(report.rows.size() == 12);
  CHECK(report.rows[0].method == "nes");
  CHECK(report.rows[0].delta == 1e-2);
  CHECK(report.rows[11].method == "spsa");
  CHECK(report.rows[11].sidedness == 1);
  for (const auto& r : report.rows) {
    CHECK((r.success_rate_pct >= 0.0 && r.success_rate_pct <= 100.0));
    CHECK(r.n_probes == probes.size());
    CHECK(r.budget == 20'000);
    CHECK(r.n_samples == 10);
  }
}

TEST_CASE("no successes: empty success median, capped median at budget") {
  std::vector<Probe> probes;
  auto model = small_model(&probes);
  auto spec = small_spec(probes, model);
  spec.methods = {Method::parse("spsa2")};
  spec.deltas = {1e-3};
  spec.attack.budget = 5;
  const auto report = run_experiment(spec);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].success_rate_pct == 0.0);
  CHECK_FALSE(report.rows[0].median_queries_succ.has_value());
  CHECK(report.rows[0].median_queries_all == 5);
  CHECK(render_report(report, ReportFormat::Csv).find(",NA,5,") != std::string::npos);
}

TEST_CASE("experiment is deterministic, worker-independent and probe-order independent") {
  std::vector<Probe> probes;
  auto model = small_model(&probes);
  auto spec = small_spec(probes, model);
  const auto a = render_report(run_experiment(spec), ReportFormat::Csv);
  CHECK(render_report(run_experiment(spec), ReportFormat::Csv) == a);
  spec.workers = 3;
  CHECK(render_report(run_experiment(spec), ReportFormat::Csv) == a);
  std::reverse(spec.probes.begin(), spec.probes.end());
  CHECK(render_report(run_experiment(spec), ReportFormat::Csv) == a);

  // A cell run on its own reproduces its row of the grid.
  spec.methods = {Method::parse("rdsa2")};
  spec.deltas = {1e-4};
  const auto cell = render_report(run_experiment(spec), ReportFormat::Csv);
  CHECK(a.find(cell.substr(cell.find('\n') + 1)) != std::string::npos);
}

TEST_CASE("report serialization") {
  ExperimentReport report;
  ReportRow r;
  r.method = "rdsa";
  r.sidedness = 2;
  r.delta = 1e-3;
  r.success_rate_pct = 100.0 / 3.0;
  r.median_queries_succ = 1234;
  r.median_queries_all = 5678;
  r.n_probes = 3;
  r.n_samples = 50;
  r.step_size = 0.005;
  r.epsilon = 0.05;
  r.budget = 1'000'000;
  r.seed = 18446744073709551615ULL;
  report.rows.push_back(r);
  r.method = "spsa";
  r.sidedness = 1;
  r.median_queries_succ.reset();
  report.rows.push_back(r);

  const auto csv = render_report(report, ReportFormat::Csv);
  CHECK(csv.substr(0, csv.find('\n')) ==
        "method,sidedness,delta,success_rate_pct,median_queries_succ,median_queries_all,n_probes,n_samples,"
        "step_size,epsilon,budget,seed");
  CHECK(parse_report(csv, ReportFormat::Csv) == report);
  const auto json = render_report(report, ReportFormat::Json);
  CHECK(parse_report(json, ReportFormat::Json) == report);
  CHECK(parse_report(json, ReportFormat::Json) == parse_report(csv, ReportFormat::Csv));

  const auto dir = std::filesystem::temp_directory_path() / "zog_report_test";
  std::filesystem::create_directories(dir);
  write_report(report, ReportFormat::Csv, dir / "r.csv");
  CHECK(read_report(dir / "r.csv", ReportFormat::Csv) == report);
  CHECK_THROWS_AS(write_report(report, ReportFormat::Csv, dir / "missing" / "r.csv"), Error);
  CHECK_THROWS_AS(parse_report("method,wrong\n", ReportFormat::Csv), Error);
  CHECK_THROWS_AS(parse_report("{\"rows\": [{}]}", ReportFormat::Json), Error);
}

TEST_CASE("spec validation") {
  std::vector<Probe> probes;
  auto model = small_model(&probes);
  auto spec = small_spec(probes, model);
  spec.deltas.clear();
  CHECK_THROWS_AS(run_experiment(spec), std::invalid_argument);
  spec = small_spec(probes, model);
  spec.probes[0].x.pop_back();
  CHECK_THROWS_AS(run_experiment(spec), std::invalid_argument);
}
