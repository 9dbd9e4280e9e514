#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "zog/attack.hpp"
#include "zog/errors.hpp"
#include "zog/harness.hpp"
#include "zog/remote.hpp"
#include "zog/synthetic.hpp"

namespace py = pybind11;
using namespace zog;

namespace {

using ModelPtr = std::shared_ptr<MlpModel>;

/// An oracle target from Python: an in-process model or a "host:port" string.
std::unique_ptr<Oracle> open_oracle(const std::variant<ModelPtr, std::string>& target, std::uint64_t budget) {
  if (const auto* model = std::get_if<ModelPtr>(&target)) return std::make_unique<MlpOracle>(*model, budget);
  return RemoteOracle::connect(std::get<std::string>(target));
}

EstimatorConfig estimator_config(const std::string& method, int sided, std::size_t n, double delta,
                                 std::size_t workers) {
  if (sided != 1 && sided != 2) throw std::invalid_argument("sided must be 1 or 2");
  const auto kind = parse_method_name(method);
  if (!kind) throw std::invalid_argument("unknown method '" + method + "' (nes, spsa, rdsa)");
  EstimatorConfig cfg;
  cfg.kind = *kind;
  cfg.sidedness = sided == 1 ? Sidedness::OneSided : Sidedness::TwoSided;
  cfg.samples = n;
  cfg.delta = delta;
  cfg.workers = workers;
  cfg.validate();
  return cfg;
}

py::dict outcome_dict(const AttackOutcome& o) {
  py::dict d;
  d["success"] = o.success;
  d["queries"] = o.queries;
  d["iterations"] = o.iterations;
  d["x_adv"] = o.x_adv;
  d["linf_dist"] = o.linf_dist;
  d["target"] = o.target;
  d["failure_reason"] =
      o.failure_reason ? py::object(py::str(std::string(to_string(*o.failure_reason)))) : py::object(py::none());
  return d;
}

py::dict row_dict(const ReportRow& r) {
  py::dict d;
  d["method"] = r.method;
  d["sidedness"] = r.sidedness;
  d["delta"] = r.delta;
  d["success_rate_pct"] = r.success_rate_pct;
  d["median_queries_succ"] = r.median_queries_succ;
  d["median_queries_all"] = r.median_queries_all;
  d["n_probes"] = r.n_probes;
  d["n_samples"] = r.n_samples;
  d["step_size"] = r.step_size;
  d["epsilon"] = r.epsilon;
  d["budget"] = r.budget;
  d["seed"] = r.seed;
  return d;
}

}  // namespace

PYBIND11_MODULE(_zogkit, m) {
  m.doc() = "Zeroth-order gradient estimation and black-box attacks";

  py::register_exception<BudgetExhausted>(m, "BudgetExhausted", PyExc_RuntimeError);
  py::register_exception<TransportError>(m, "TransportError", PyExc_ConnectionError);
  py::register_exception<ModelFormatError>(m, "ModelFormatError", PyExc_ValueError);

  py::class_<MlpModel, ModelPtr>(m, "Model")
      .def_property_readonly("input_dim", &MlpModel::input_dim)
      .def_property_readonly("num_classes", &MlpModel::num_classes)
      .def_property_readonly("dims", &MlpModel::dims)
      .def("forward", [](const MlpModel& self, const std::vector<double>& x) { return self.forward(x); }, py::arg("x"))
      .def("predict", [](const MlpModel& self, const std::vector<double>& x) { return argmax(self.forward(x)); },
           py::arg("x"))
      .def("to_bytes",
           [](const MlpModel& self) {
             const auto bytes = save_mlp(self);
             return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
           })
      .def_static("from_bytes",
                  [](const py::bytes& data) {
                    const std::string s = data;
                    const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
                    return std::make_shared<MlpModel>(load_mlp(std::span(p, s.size())));
                  })
      .def("save", [](const MlpModel& self, const std::filesystem::path& path) { save_mlp_file(self, path); },
           py::arg("path"))
      .def_static("load",
                  [](const std::filesystem::path& path) { return std::make_shared<MlpModel>(load_mlp_file(path)); },
                  py::arg("path"))
      .def("__eq__", [](const MlpModel& a, const MlpModel& b) { return a == b; });

  m.def(
      "gen_model",
      [](const std::vector<std::size_t>& dims, std::size_t num_classes, std::size_t num_probes, std::uint64_t seed,
         double contrast) {
        auto bench = gen_model(dims, num_classes, num_probes, seed, contrast);
        std::vector<std::pair<std::vector<double>, std::size_t>> probes;
        for (auto& p : bench.probes) probes.emplace_back(std::move(p.x), p.label);
        return std::make_pair(std::make_shared<MlpModel>(std::move(bench.model)), probes);
      },
      py::arg("dims") = std::vector<std::size_t>{64, 32}, py::arg("num_classes") = 10, py::arg("num_probes") = 50,
      py::arg("seed") = 0, py::arg("contrast") = 0.05,
      "Random MLP and probes; returns (model, [(x, label), ...]).");

  m.def(
      "estimate_gradient",
      [](const std::variant<ModelPtr, std::string>& target, const std::vector<double>& x, std::size_t cls,
         const std::string& method, int sided, std::size_t n, double delta, std::uint64_t seed, std::size_t workers) {
        const auto cfg = estimator_config(method, sided, n, delta, workers);
        auto oracle = open_oracle(target, kDefaultBudget);
        Rng rng(seed);
        py::gil_scoped_release release;
        const auto est = estimate_gradient(*oracle, x, cls, cfg, rng);
        return std::make_pair(est.grad, est.queries_used);
      },
      py::arg("oracle"), py::arg("x"), py::arg("target"), py::arg("method") = "spsa", py::arg("sided") = 2,
      py::arg("n") = 50, py::arg("delta") = 1e-3, py::arg("seed") = 0, py::arg("workers") = 1,
      "Gradient of the target-class cross-entropy; returns (grad, queries).");

  m.def(
      "attack",
      [](const std::variant<ModelPtr, std::string>& target, const std::vector<double>& x0,
         std::optional<std::size_t> cls, const std::string& method, int sided, std::size_t n, double delta,
         double epsilon, std::optional<double> step, std::uint64_t budget, std::uint64_t max_iterations,
         std::uint64_t seed) {
        AttackConfig cfg;
        cfg.estimator = estimator_config(method, sided, n, delta, 1);
        cfg.epsilon = epsilon;
        cfg.step_size = step.value_or(epsilon > 0 ? epsilon / 10.0 : cfg.step_size);
        cfg.budget = budget;
        cfg.max_iterations = max_iterations;
        auto oracle = open_oracle(target, budget);
        Rng rng(seed);
        AttackOutcome out;
        {
          py::gil_scoped_release release;
          out = run_attack(*oracle, x0, cfg, rng, cls);
        }
        return outcome_dict(out);
      },
      py::arg("oracle"), py::arg("x0"), py::arg("target") = py::none(), py::arg("method") = "spsa",
      py::arg("sided") = 2, py::arg("n") = 50, py::arg("delta") = 1e-3, py::arg("epsilon") = 0.05,
      py::arg("step") = py::none(), py::arg("budget") = kDefaultBudget, py::arg("max_iterations") = 10'000,
      py::arg("seed") = 0, "Targeted L-inf PGD; returns the outcome as a dict.");

  m.def(
      "run_experiment",
      [](const ModelPtr& model, const std::vector<std::pair<std::vector<double>, std::size_t>>& probes,
         const std::vector<std::string>& methods, const std::vector<double>& deltas, std::size_t n, double epsilon,
         std::uint64_t budget, std::uint64_t seed, std::size_t workers) {
        ExperimentSpec spec;
        spec.make_oracle = [model] { return std::make_unique<MlpOracle>(model); };
        for (const auto& [x, label] : probes) spec.probes.push_back(Probe{x, label});
        for (const auto& label : methods) spec.methods.push_back(Method::parse(label));
        spec.deltas = deltas;
        spec.attack.estimator.samples = n;
        spec.attack.epsilon = epsilon;
        spec.attack.step_size = epsilon / 10.0;
        spec.attack.budget = budget;
        spec.seed = seed;
        spec.workers = workers;
        ExperimentReport report;
        {
          py::gil_scoped_release release;
          report = run_experiment(spec);
        }
        py::list rows;
        for (const auto& r : report.rows) rows.append(row_dict(r));
        return py::make_tuple(rows, render_report(report, ReportFormat::Csv));
      },
      py::arg("model"), py::arg("probes"), py::arg("methods") = std::vector<std::string>{"nes2", "rdsa2", "spsa2", "spsa1"},
      py::arg("deltas") = reference_deltas(), py::arg("n") = 50, py::arg("epsilon") = 0.05,
      py::arg("budget") = kDefaultBudget, py::arg("seed") = 0, py::arg("workers") = 1,
      "Method x delta grid; returns (rows, csv_text).");

  py::class_<OracleServer>(m, "Server")
      .def(py::init([](const ModelPtr& model, const std::string& host, std::uint16_t port, std::uint64_t budget) {
             ServerOptions opts;
             opts.host = host;
             opts.port = port;
             opts.budget = budget;
             auto server = std::make_unique<OracleServer>(model, opts);
             server->start();
             return server;
           }),
           py::arg("model"), py::arg("host") = "127.0.0.1", py::arg("port") = 0, py::arg("budget") = kDefaultBudget)
      .def_property_readonly("address", &OracleServer::address)
      .def_property_readonly("port", &OracleServer::port)
      .def_property_readonly("used", [](const OracleServer& s) { return s.ledger().used(); })
      .def("stop", &OracleServer::stop, py::call_guard<py::gil_scoped_release>())
      .def("__enter__", [](OracleServer& s) -> OracleServer& { return s; }, py::return_value_policy::reference)
      .def("__exit__", [](OracleServer& s, py::args) { s.stop(); }, py::call_guard<py::gil_scoped_release>());
}
