// zog: command-line front end for the zeroth-order attack toolkit.
//
// Exit codes: 0 success, 1 attack failure (attack subcommand only),
// 2 operational error (bad flags, unreadable files, transport failure).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zog/attack.hpp"
#include "zog/errors.hpp"
#include "zog/estimator.hpp"
#include "zog/harness.hpp"
#include "zog/mlp.hpp"
#include "zog/remote.hpp"
#include "zog/synthetic.hpp"

namespace fs = std::filesystem;
using namespace zog;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAttackFailed = 1;
constexpr int kExitError = 2;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct Globals {
  std::uint64_t seed = 0;
  int verbosity = 1;
  std::string output_dir;
};

/// Shortest text that reads back to the same double.
std::string real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

class Echo {
 public:
  explicit Echo(const std::string& subcommand) { std::cout << "# zog " << subcommand << "\n"; }
  template <class T>
  Echo& operator()(const std::string& key, const T& value) {
    std::cout << "# " << key << " = " << value << "\n";
    return *this;
  }
  Echo& real(const std::string& key, double value) { return (*this)(key, ::real(value)); }
  ~Echo() { std::cout.flush(); }
};

fs::path resolve_output(const Globals& g, const std::string& path) {
  fs::path p(path);
  if (p.is_absolute() || g.output_dir.empty()) return p;
  return fs::path(g.output_dir) / p;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_reals(const std::string& text) {
  std::vector<double> out;
  for (const auto& s : split_list(text)) {
    std::size_t used = 0;
    out.push_back(std::stod(s, &used));
    if (used != s.size()) throw std::invalid_argument("malformed number '" + s + "'");
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(text)) {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != s.size() || s.front() == '-') throw std::invalid_argument("malformed integer '" + s + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

Method method_from_flags(const std::string& method, int sided) {
  if (sided != 1 && sided != 2) throw std::invalid_argument("--sided must be 1 or 2");
  return Method::parse(method + std::to_string(sided));
}

// ------------------------------------------------------------------ gen-model

struct GenModelArgs {
  std::string dims = "64,32";
  std::size_t classes = 10;
  std::size_t probes = 50;
  double contrast = 0.05;
  std::string out_model = "model.zog";
  std::string out_probes = "probes.csv";
};

int run_gen_model(const Globals& g, const GenModelArgs& a) {
  const auto dims = parse_sizes(a.dims);
  const auto model_path = resolve_output(g, a.out_model);
  const auto probe_path = resolve_output(g, a.out_probes);
  Echo("gen-model")("dims", a.dims)("classes", a.classes)("probes", a.probes)
      .real("contrast", a.contrast)("seed", g.seed)("out_model", model_path.string())(
          "out_probes", probe_path.string());

  const auto bench = gen_model(dims, a.classes, a.probes, g.seed, a.contrast);
  save_mlp_file(bench.model, model_path);
  save_probes_file(bench.probes, probe_path);
  // Reload to prove the files are valid.
  const auto reloaded = load_mlp_file(model_path);
  const auto probes = load_probes_file(probe_path);
  if (!(reloaded == bench.model) || probes.size() != bench.probes.size()) throw Error("reload check failed");
  if (g.verbosity > 0) {
    std::cout << "wrote " << model_path.string() << " (" << reloaded.layers().size() << " layers) and "
              << probe_path.string() << " (" << probes.size() << " probes)\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------- serve

struct ServeArgs {
  std::string model;
  std::string bind = "127.0.0.1:7070";
  std::uint64_t budget = kDefaultBudget;
  std::size_t max_connections = 16;
};

int run_serve(const Globals& g, const ServeArgs& a) {
  const auto colon = a.bind.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("--bind must be host:port");
  ServerOptions opts;
  opts.host = a.bind.substr(0, colon);
  opts.port = static_cast<std::uint16_t>(std::stoul(a.bind.substr(colon + 1)));
  opts.budget = a.budget;
  opts.max_connections = a.max_connections;
  Echo("serve")("model", a.model)("bind", a.bind)("budget", a.budget)("max_connections", a.max_connections)(
      "seed", g.seed);

  auto model = std::make_shared<const MlpModel>(load_mlp_file(a.model));
  OracleServer server(model, opts);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.start();
  std::cout << "listening on " << server.address() << std::endl;
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  server.stop();
  if (g.verbosity > 0) std::cout << "shutdown: served " << server.ledger().used() << " queries\n";
  return kExitOk;
}

// --------------------------------------------------------------------- attack

struct AttackArgs {
  std::string model;
  std::string connect;
  std::string probes;
  std::size_t probe_index = 0;
  std::string x;
  long target = -1;
  std::string method = "spsa";
  int sided = 2;
  double delta = 1e-3;
  std::size_t n = 50;
  double epsilon = 0.05;
  double step = -1.0;
  std::uint64_t budget = kDefaultBudget;
  std::uint64_t max_iterations = 10'000;
  std::size_t workers = 1;
  std::string record;
};

nlohmann::ordered_json outcome_json(const AttackOutcome& o) {
  nlohmann::ordered_json j;
  j["success"] = o.success;
  j["queries"] = o.queries;
  j["iterations"] = o.iterations;
  j["target"] = o.target;
  j["linf_dist"] = o.linf_dist;
  j["failure_reason"] = o.failure_reason ? nlohmann::ordered_json(std::string(to_string(*o.failure_reason)))
                                         : nlohmann::ordered_json(nullptr);
  j["x_adv"] = o.x_adv;
  return j;
}

int run_attack_cmd(const Globals& g, const AttackArgs& a) {
  if (a.model.empty() == a.connect.empty()) throw std::invalid_argument("give exactly one of --model or --connect");
  if (a.probes.empty() == a.x.empty()) throw std::invalid_argument("give exactly one of --probes or --x");

  AttackConfig cfg;
  const auto method = method_from_flags(a.method, a.sided);
  cfg.estimator.kind = method.kind;
  cfg.estimator.sidedness = method.sidedness;
  cfg.estimator.delta = a.delta;
  cfg.estimator.samples = a.n;
  cfg.estimator.workers = a.workers;
  cfg.epsilon = a.epsilon;
  cfg.step_size = a.step > 0.0 ? a.step : (a.epsilon > 0.0 ? a.epsilon / 10.0 : 1e-3);
  cfg.budget = a.budget;
  cfg.max_iterations = a.max_iterations;

  Point x0;
  std::optional<std::size_t> label;
  if (!a.x.empty()) {
    x0 = parse_reals(a.x);
  } else {
    const auto probes = load_probes_file(a.probes);
    if (a.probe_index >= probes.size()) throw std::invalid_argument("--probe-index out of range");
    x0 = probes[a.probe_index].x;
    label = probes[a.probe_index].label;
  }
  std::optional<std::size_t> target;
  if (a.target >= 0) target = static_cast<std::size_t>(a.target);

  Echo echo("attack");
  echo("oracle", a.model.empty() ? "remote " + a.connect : a.model);
  if (!a.x.empty()) {
    echo("x", a.x);
  } else {
    echo("probes", a.probes)("probe_index", a.probe_index);
  }
  echo("target", target ? std::to_string(*target) : std::string("least-likely"))("method", method.label())
      .real("delta", cfg.estimator.delta)("n", cfg.estimator.samples)
      .real("reciprocal_cap", cfg.estimator.reciprocal_cap)
      .real("epsilon", cfg.epsilon)
      .real("step_size", cfg.step_size)("budget", cfg.budget)("max_iterations", cfg.max_iterations)(
          "workers", cfg.estimator.workers)("clip", "[0, 1]")("seed", g.seed);

  std::unique_ptr<Oracle> oracle;
  if (!a.connect.empty()) {
    oracle = RemoteOracle::connect(a.connect);
  } else {
    oracle = std::make_unique<MlpOracle>(std::make_shared<const MlpModel>(load_mlp_file(a.model)));
  }
  Rng rng(g.seed);
  const auto outcome = run_attack(*oracle, x0, cfg, rng, target);

  std::cout << (outcome.success ? "SUCCESS" : "FAILURE") << " target=" << outcome.target;
  if (label) std::cout << " clean_label=" << *label;
  std::cout << " queries=" << outcome.queries << " iterations=" << outcome.iterations
            << " linf=" << real(outcome.linf_dist);
  if (outcome.failure_reason) std::cout << " reason=" << to_string(*outcome.failure_reason);
  std::cout << "\n";

  auto record = outcome_json(outcome);
  if (g.verbosity > 1) std::cout << record.dump() << "\n";
  if (!a.record.empty()) {
    const auto path = resolve_output(g, a.record);
    nlohmann::ordered_json doc;
    doc["method"] = method.label();
    doc["delta"] = cfg.estimator.delta;
    doc["n"] = cfg.estimator.samples;
    doc["epsilon"] = cfg.epsilon;
    doc["step_size"] = cfg.step_size;
    doc["budget"] = cfg.budget;
    doc["seed"] = g.seed;
    doc["outcome"] = std::move(record);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write record " + path.string());
    out << doc.dump(2) << "\n";
  }
  return outcome.success ? kExitOk : kExitAttackFailed;
}

// ----------------------------------------------------------------- experiment

struct ExperimentArgs {
  std::string spec;
  std::string model;
  std::string probes;
  std::string methods = "nes2,rdsa2,spsa2,spsa1";
  std::string deltas = "1e-2,1e-3,1e-4";
  std::size_t n = 50;
  double epsilon = 0.05;
  double step = -1.0;
  std::uint64_t budget = kDefaultBudget;
  std::uint64_t max_iterations = 10'000;
  std::size_t workers = 1;
  std::string out = "report.csv";
  std::string out_json;
};

/// Fills any argument not given explicitly on the command line from a JSON spec file.
void apply_spec_file(ExperimentArgs& a, Globals& g, const CLI::App& cmd, const CLI::App& app) {
  std::ifstream in(a.spec);
  if (!in) throw Error("cannot open experiment spec " + a.spec);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("experiment spec " + a.spec + ": " + e.what());
  }
  const auto unset = [&](const char* flag) { return cmd.count(flag) == 0; };
  const auto join = [](const nlohmann::json& arr) {
    std::string s;
    for (const auto& v : arr) {
      if (!s.empty()) s += ',';
      s += v.is_string() ? v.get<std::string>() : real(v.get<double>());
    }
    return s;
  };
  try {
    if (j.contains("model") && unset("--model")) a.model = j["model"].get<std::string>();
    if (j.contains("probes") && unset("--probes")) a.probes = j["probes"].get<std::string>();
    if (j.contains("methods") && unset("--methods")) a.methods = join(j["methods"]);
    if (j.contains("deltas") && unset("--deltas")) a.deltas = join(j["deltas"]);
    if (j.contains("n") && unset("--n")) a.n = j["n"].get<std::size_t>();
    if (j.contains("epsilon") && unset("--epsilon")) a.epsilon = j["epsilon"].get<double>();
    if (j.contains("step") && unset("--step")) a.step = j["step"].get<double>();
    if (j.contains("budget") && unset("--budget")) a.budget = j["budget"].get<std::uint64_t>();
    if (j.contains("max_iterations") && unset("--max-iterations")) a.max_iterations = j["max_iterations"].get<std::uint64_t>();
    if (j.contains("workers") && unset("--workers")) a.workers = j["workers"].get<std::size_t>();
    if (j.contains("seed") && app.count("--seed") == 0) g.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("experiment spec " + a.spec + ": " + e.what());
  }
}

int run_experiment_cmd(const Globals& g, const ExperimentArgs& a) {
  if (a.model.empty() || a.probes.empty()) throw std::invalid_argument("experiment needs --model and --probes");
  ExperimentSpec spec;
  for (const auto& m : split_list(a.methods)) spec.methods.push_back(Method::parse(m));
  spec.deltas = parse_reals(a.deltas);
  spec.attack.estimator.samples = a.n;
  spec.attack.epsilon = a.epsilon;
  spec.attack.step_size = a.step > 0.0 ? a.step : a.epsilon / 10.0;
  spec.attack.budget = a.budget;
  spec.attack.max_iterations = a.max_iterations;
  spec.seed = g.seed;
  spec.workers = a.workers;

  const auto csv_path = resolve_output(g, a.out);
  Echo echo("experiment");
  echo("model", a.model)("probes", a.probes)("methods", a.methods)("deltas", a.deltas)("n", a.n)
      .real("reciprocal_cap", spec.attack.estimator.reciprocal_cap)
      .real("epsilon", spec.attack.epsilon)
      .real("step_size", spec.attack.step_size)("budget", spec.attack.budget)(
          "max_iterations", spec.attack.max_iterations)("workers", spec.workers)("seed", spec.seed)(
          "out", csv_path.string());
  if (!a.out_json.empty()) echo("out_json", resolve_output(g, a.out_json).string());

  std::shared_ptr<const MlpModel> model;
  try {
    model = std::make_shared<const MlpModel>(load_mlp_file(a.model));
  } catch (const Error& e) {
    throw Error("model source " + a.model + ": " + e.what());
  }
  try {
    spec.probes = load_probes_file(a.probes);
  } catch (const Error& e) {
    throw Error("probe source " + a.probes + ": " + e.what());
  }
  spec.make_oracle = [model] { return std::make_unique<MlpOracle>(model); };

  const auto report = run_experiment(spec);
  write_report(report, ReportFormat::Csv, csv_path);
  if (!a.out_json.empty()) write_report(report, ReportFormat::Json, resolve_output(g, a.out_json));
  if (g.verbosity > 0) std::cout << render_report(report, ReportFormat::Csv);
  return kExitOk;
}

// ------------------------------------------------------------- estimate-check

struct EstimateCheckArgs {
  std::string objective = "cubic";
  std::size_t dim = 6;
  std::string method = "spsa";
  int sided = 2;
  std::string deltas = "1e-1,1e-2,1e-3";
  std::size_t n = 64;
  std::size_t trials = 200;
  double point_scale = 1.0;
};

constexpr std::size_t kMaxExhaustiveDim = 16;

int run_estimate_check(const Globals& g, const EstimateCheckArgs& a) {
  const auto method = method_from_flags(a.method, a.sided);
  const auto deltas = parse_reals(a.deltas);
  if (deltas.empty()) throw std::invalid_argument("--deltas is empty");
  const auto problem = make_diagnostic_problem(a.objective, a.dim, g.seed, a.point_scale);
  const bool exhaustive = method.kind == DirectionKind::Rademacher && a.dim <= kMaxExhaustiveDim;

  Echo("estimate-check")("objective", a.objective)("dim", a.dim)("method", method.label())("deltas", a.deltas)(
      "n", a.n)("trials", a.trials)
      .real("point_scale", a.point_scale)(
          "bias_directions", exhaustive ? "exhaustive rademacher" : "sampled (trials * n)")("seed", g.seed);

  std::vector<std::vector<double>> directions;
  if (exhaustive) {
    directions = enumerate_rademacher(a.dim);
  } else {
    Rng dir_rng(split_seed(g.seed, 1));
    for (std::size_t i = 0; i < a.trials * a.n; ++i) directions.push_back(sample_direction(method.kind, a.dim, dir_rng));
  }

  std::printf("%-10s %-24s %-24s %-12s %-12s\n", "delta", "bias_norm", "fd_error_rms", "cosine", "avg_error");
  std::vector<double> bias_norms, fd_errors;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    EstimatorConfig cfg;
    cfg.kind = method.kind;
    cfg.sidedness = method.sidedness;
    cfg.samples = a.n;
    cfg.delta = deltas[k];
    SyntheticOracle oracle(problem.objective);
    const auto profile = bias_profile(oracle, problem.x, 0, cfg, directions);
    Rng rng(split_seed(g.seed, 2 + k));
    const auto diag = estimator_diagnostics(oracle, problem.x, 0, cfg, a.trials, rng);
    double norm = 0.0;
    for (double b : profile.expectation_bias) norm += b * b;
    norm = std::sqrt(norm);
    bias_norms.push_back(norm);
    fd_errors.push_back(profile.truncation_rms);
    std::printf("%-10s %-24s %-24s %-12s %-12s\n", real(cfg.delta).c_str(), real(norm).c_str(),
                real(profile.truncation_rms).c_str(),
                diag.mean_cosine ? std::to_string(*diag.mean_cosine).c_str() : "n/a",
                std::to_string(diag.avg_error).c_str());
  }

  SyntheticOracle probe_oracle(problem.objective);
  double grad_norm = 0.0;
  for (double v : probe_oracle.true_gradient(problem.x, 0)) grad_norm += v * v;
  const double noise_floor = 1e-9 * std::max(1.0, std::sqrt(grad_norm));
  const auto slope_text = [&](const std::vector<double>& ys) -> std::string {
    if (deltas.size() < 2) return "n/a (need >= 2 deltas)";
    for (double y : ys) {
      if (!(y > noise_floor)) return "n/a (error at machine precision)";
    }
    return real(loglog_slope(deltas, ys));
  };
  std::cout << "slope(fd_error_rms vs delta) = " << slope_text(fd_errors) << "\n";
  std::cout << "slope(bias_norm vs delta)    = " << slope_text(bias_norms) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zog: zeroth-order gradient estimation and black-box attacks"};
  app.require_subcommand(1);
  Globals g;
  if (const char* dir = std::getenv("ZOG_OUTPUT_DIR")) g.output_dir = dir;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--verbosity", g.verbosity, "0 quiet, 1 summary, 2 detail")->capture_default_str();
  app.add_option("--output", g.output_dir, "Directory for relative output paths (default $ZOG_OUTPUT_DIR)");

  GenModelArgs gm;
  auto* gen = app.add_subcommand("gen-model", "Generate a random MLP benchmark and probe set");
  gen->add_option("--dims", gm.dims, "Input width then hidden widths, comma separated")->capture_default_str();
  gen->add_option("--classes", gm.classes)->capture_default_str();
  gen->add_option("--probes", gm.probes)->capture_default_str();
  gen->add_option("--contrast", gm.contrast, "Probe pixel std-dev around 0.5")->capture_default_str();
  gen->add_option("--out-model", gm.out_model)->capture_default_str();
  gen->add_option("--out-probes", gm.out_probes)->capture_default_str();

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Serve a model over the ZOG/1 line protocol");
  serve->add_option("--model", sv.model)->required();
  serve->add_option("--bind", sv.bind)->capture_default_str();
  serve->add_option("--budget", sv.budget)->capture_default_str();
  serve->add_option("--max-connections", sv.max_connections)->capture_default_str();

  AttackArgs at;
  auto* attack = app.add_subcommand("attack", "Run one targeted black-box PGD attack");
  attack->add_option("--model", at.model, "Model file");
  attack->add_option("--connect", at.connect, "host:port of a zog server");
  attack->add_option("--probes", at.probes, "Probe file");
  attack->add_option("--probe-index", at.probe_index)->capture_default_str();
  attack->add_option("--x", at.x, "Input point, comma separated");
  attack->add_option("--target", at.target, "Target class (default: least likely)");
  attack->add_option("--method", at.method, "nes | spsa | rdsa")->capture_default_str();
  attack->add_option("--sided", at.sided, "1 or 2")->capture_default_str();
  attack->add_option("--delta", at.delta)->capture_default_str();
  attack->add_option("--n", at.n, "Samples per gradient estimate")->capture_default_str();
  attack->add_option("--epsilon", at.epsilon)->capture_default_str();
  attack->add_option("--step", at.step, "PGD step (default epsilon/10)");
  attack->add_option("--budget", at.budget)->capture_default_str();
  attack->add_option("--max-iterations", at.max_iterations)->capture_default_str();
  attack->add_option("--workers", at.workers)->capture_default_str();
  attack->add_option("--record", at.record, "Write a JSON record of the outcome");

  ExperimentArgs ex;
  auto* experiment = app.add_subcommand("experiment", "Run the method x delta grid over a probe set");
  experiment->add_option("--spec", ex.spec, "JSON spec file; explicit flags override it");
  experiment->add_option("--model", ex.model);
  experiment->add_option("--probes", ex.probes);
  experiment->add_option("--methods", ex.methods)->capture_default_str();
  experiment->add_option("--deltas", ex.deltas)->capture_default_str();
  experiment->add_option("--n", ex.n)->capture_default_str();
  experiment->add_option("--epsilon", ex.epsilon)->capture_default_str();
  experiment->add_option("--step", ex.step, "PGD step (default epsilon/10)");
  experiment->add_option("--budget", ex.budget)->capture_default_str();
  experiment->add_option("--max-iterations", ex.max_iterations)->capture_default_str();
  experiment->add_option("--workers", ex.workers)->capture_default_str();
  experiment->add_option("--out", ex.out, "CSV report path")->capture_default_str();
  experiment->add_option("--out-json", ex.out_json, "JSON report path");

  EstimateCheckArgs ec;
  auto* check = app.add_subcommand("estimate-check", "Estimator bias and accuracy on synthetic objectives");
  check->add_option("--objective", ec.objective, "linear | quadratic | cubic | softmax")->capture_default_str();
  check->add_option("--dim", ec.dim)->capture_default_str();
  check->add_option("--method", ec.method)->capture_default_str();
  check->add_option("--sided", ec.sided)->capture_default_str();
  check->add_option("--deltas", ec.deltas)->capture_default_str();
  check->add_option("--n", ec.n)->capture_default_str();
  check->add_option("--trials", ec.trials)->capture_default_str();
  check->add_option("--point-scale", ec.point_scale, "Probe point drawn from point_scale * U(-1,1)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*gen) return run_gen_model(g, gm);
    if (*serve) return run_serve(g, sv);
    if (*attack) return run_attack_cmd(g, at);
    if (*experiment) {
      if (!ex.spec.empty()) apply_spec_file(ex, g, *experiment, app);
      return run_experiment_cmd(g, ex);
    }
    if (*check) return run_estimate_check(g, ec);
  } catch (const std::exception& e) {
    std::cerr << "zog: error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
