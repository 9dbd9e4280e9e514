#include "zog/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "zog/errors.hpp"

namespace zog {

namespace {

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) return out;
    start = comma + 1;
  }
}

double parse_real(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  if (s.empty() || s.front() == '-') throw std::invalid_argument(s);
  std::size_t used = 0;
  const auto v = std::stoull(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

}  // namespace

std::string Method::label() const {
  return std::string(method_name(kind)) + (sidedness == Sidedness::TwoSided ? "2" : "1");
}

Method Method::parse(std::string_view label) {
  if (label.size() < 2) throw std::invalid_argument("unknown method '" + std::string(label) + "'");
  const char side = label.back();
  const auto kind = parse_method_name(label.substr(0, label.size() - 1));
  if (!kind || (side != '1' && side != '2')) {
    throw std::invalid_argument("unknown method '" + std::string(label) + "' (expected nes|spsa|rdsa + 1|2)");
  }
  return {*kind, side == '2' ? Sidedness::TwoSided : Sidedness::OneSided};
}

std::vector<Method> reference_methods() {
  return {{DirectionKind::Gaussian, Sidedness::TwoSided},
          {DirectionKind::UniformSym, Sidedness::TwoSided},
          {DirectionKind::Rademacher, Sidedness::TwoSided},
          {DirectionKind::Rademacher, Sidedness::OneSided}};
}

std::vector<double> reference_deltas() { return {1e-2, 1e-3, 1e-4}; }

void ExperimentSpec::validate() const {
  if (!make_oracle) throw std::invalid_argument("experiment: no oracle source");
  if (methods.empty() || deltas.empty()) throw std::invalid_argument("experiment: empty method or delta list");
  if (probes.empty()) throw std::invalid_argument("experiment: empty probe set");
  for (double d : deltas) {
    if (!(d > 0.0)) throw std::invalid_argument("experiment: deltas must be > 0");
  }
  attack.validate();
}

std::uint64_t probe_key(const Probe& probe) noexcept {
  std::uint64_t h = splitmix64_mix(probe.x.size());
  for (double v : probe.x) h = splitmix64_mix(h ^ std::bit_cast<std::uint64_t>(v));
  return splitmix64_mix(h ^ probe.label);
}

std::uint64_t cell_seed(std::uint64_t master, std::uint64_t probe_key, const Method& method, double delta) noexcept {
  const std::uint64_t method_key =
      2 * static_cast<std::uint64_t>(method.kind) + (method.sidedness == Sidedness::TwoSided ? 1 : 0);
  return split_seed(master, {probe_key, method_key, std::bit_cast<std::uint64_t>(delta)});
}

std::optional<std::uint64_t> median_queries(std::span<const AttackOutcome> outcomes, MedianMode mode,
                                            std::uint64_t budget) {
  if (outcomes.empty()) throw std::invalid_argument("median_queries: no outcomes");
  std::vector<std::uint64_t> q;
  for (const auto& o : outcomes) {
    if (o.success) {
      q.push_back(o.queries);
    } else if (mode == MedianMode::AllCapped) {
      q.push_back(budget);
    }
  }
  if (q.empty()) return std::nullopt;
  std::sort(q.begin(), q.end());
  return q[(q.size() - 1) / 2];
}

ExperimentReport run_experiment(const ExperimentSpec& spec, std::vector<CellResult>* cells) {
  spec.validate();
  const std::size_t n_probes = spec.probes.size();
  const std::size_t n_deltas = spec.deltas.size();
  const std::size_t total = spec.methods.size() * n_deltas * n_probes;
  {
    const auto probe_oracle = spec.make_oracle();
    for (const auto& p : spec.probes) {
      if (p.x.size() != probe_oracle->input_dim()) {
        throw std::invalid_argument("experiment: probe dimension does not match the oracle input");
      }
    }
  }

  std::vector<AttackOutcome> outcomes(total);
  auto run_one = [&](std::size_t flat) {
    const std::size_t p = flat % n_probes;
    const std::size_t di = (flat / n_probes) % n_deltas;
    const std::size_t mi = flat / (n_probes * n_deltas);
    AttackConfig cfg = spec.attack;
    cfg.estimator.kind = spec.methods[mi].kind;
    cfg.estimator.sidedness = spec.methods[mi].sidedness;
    cfg.estimator.delta = spec.deltas[di];
    cfg.estimator.workers = 1;
    Rng rng(cell_seed(spec.seed, probe_key(spec.probes[p]), spec.methods[mi], spec.deltas[di]));
    auto oracle = spec.make_oracle();
    outcomes[flat] = run_attack(*oracle, spec.probes[p].x, cfg, rng);
  };

  const std::size_t workers = std::clamp<std::size_t>(spec.workers, 1, std::max<std::size_t>(total, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < total; ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next.fetch_add(1); i < total && !failed; i = next.fetch_add(1)) {
            try {
              run_one(i);
            } catch (...) {
              if (!failed.exchange(true)) failure = std::current_exception();
            }
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  ExperimentReport report;
  for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
    for (std::size_t di = 0; di < n_deltas; ++di) {
      const auto first = outcomes.begin() + static_cast<std::ptrdiff_t>((mi * n_deltas + di) * n_probes);
      std::span<const AttackOutcome> cell(&*first, n_probes);
      const auto successes = std::count_if(cell.begin(), cell.end(), [](const auto& o) { return o.success; });

      ReportRow row;
      row.method = std::string(method_name(spec.methods[mi].kind));
      row.sidedness = spec.methods[mi].sidedness == Sidedness::TwoSided ? 2 : 1;
      row.delta = spec.deltas[di];
      row.success_rate_pct = 100.0 * static_cast<double>(successes) / static_cast<double>(n_probes);
      row.median_queries_succ = median_queries(cell, MedianMode::Successes, spec.attack.budget);
      row.median_queries_all = *median_queries(cell, MedianMode::AllCapped, spec.attack.budget);
      row.n_probes = n_probes;
      row.n_samples = spec.attack.estimator.samples;
      row.step_size = spec.attack.step_size;
      row.epsilon = spec.attack.epsilon;
      row.budget = spec.attack.budget;
      row.seed = spec.seed;
      report.rows.push_back(std::move(row));

      if (cells != nullptr) cells->push_back({spec.methods[mi], spec.deltas[di], {cell.begin(), cell.end()}});
    }
  }
  return report;
}

std::string render_report(const ExperimentReport& report, ReportFormat format) {
  if (format == ReportFormat::Csv) {
    std::string out = std::string(kReportColumns) + "\n";
    for (const auto& r : report.rows) {
      out += r.method + ',' + std::to_string(r.sidedness) + ',' + fmt_real(r.delta) + ',' +
             fmt_real(r.success_rate_pct) + ',' +
             (r.median_queries_succ ? std::to_string(*r.median_queries_succ) : std::string("NA")) + ',' +
             std::to_string(r.median_queries_all) + ',' + std::to_string(r.n_probes) + ',' +
             std::to_string(r.n_samples) + ',' + fmt_real(r.step_size) + ',' + fmt_real(r.epsilon) + ',' +
             std::to_string(r.budget) + ',' + std::to_string(r.seed) + '\n';
    }
    return out;
  }

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json j;
    j["method"] = r.method;
    j["sidedness"] = r.sidedness;
    j["delta"] = r.delta;
    j["success_rate_pct"] = r.success_rate_pct;
    j["median_queries_succ"] = r.median_queries_succ ? nlohmann::ordered_json(*r.median_queries_succ)
                                                     : nlohmann::ordered_json(nullptr);
    j["median_queries_all"] = r.median_queries_all;
    j["n_probes"] = r.n_probes;
    j["n_samples"] = r.n_samples;
    j["step_size"] = r.step_size;
    j["epsilon"] = r.epsilon;
    j["budget"] = r.budget;
    j["seed"] = r.seed;
    rows.push_back(std::move(j));
  }
  nlohmann::ordered_json doc;
  doc["rows"] = std::move(rows);
  return doc.dump(2) + "\n";
}

ExperimentReport parse_report(const std::string& text, ReportFormat format) {
  ExperimentReport report;
  if (format == ReportFormat::Csv) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kReportColumns) throw Error("report: unexpected CSV header");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto f = split_csv(line);
      if (f.size() != 12) throw Error("report line " + std::to_string(lineno) + ": expected 12 fields");
      try {
        ReportRow r;
        r.method = f[0];
        r.sidedness = static_cast<int>(parse_u64(f[1]));
        r.delta = parse_real(f[2]);
        r.success_rate_pct = parse_real(f[3]);
        if (f[4] != "NA") r.median_queries_succ = parse_u64(f[4]);
        r.median_queries_all = parse_u64(f[5]);
        r.n_probes = parse_u64(f[6]);
        r.n_samples = parse_u64(f[7]);
        r.step_size = parse_real(f[8]);
        r.epsilon = parse_real(f[9]);
        r.budget = parse_u64(f[10]);
        r.seed = parse_u64(f[11]);
        report.rows.push_back(std::move(r));
      } catch (const std::logic_error&) {
        throw Error("report line " + std::to_string(lineno) + ": malformed field");
      }
    }
    return report;
  }

  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& j : doc.at("rows")) {
      ReportRow r;
      r.method = j.at("method").get<std::string>();
      r.sidedness = j.at("sidedness").get<int>();
      r.delta = j.at("delta").get<double>();
      r.success_rate_pct = j.at("success_rate_pct").get<double>();
      if (!j.at("median_queries_succ").is_null()) r.median_queries_succ = j.at("median_queries_succ").get<std::uint64_t>();
      r.median_queries_all = j.at("median_queries_all").get<std::uint64_t>();
      r.n_probes = j.at("n_probes").get<std::size_t>();
      r.n_samples = j.at("n_samples").get<std::size_t>();
      r.step_size = j.at("step_size").get<double>();
      r.epsilon = j.at("epsilon").get<double>();
      r.budget = j.at("budget").get<std::uint64_t>();
      r.seed = j.at("seed").get<std::uint64_t>();
      report.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("report: malformed JSON: ") + e.what());
  }
  return report;
}

void write_report(const ExperimentReport& report, ReportFormat format, const std::filesystem::path& dest) {
  std::ofstream out(dest, std::ios::trunc);
  if (!out) throw Error("cannot write report " + dest.string());
  out << render_report(report, format);
  if (!out) throw Error("short write to " + dest.string());
}

ExperimentReport read_report(const std::filesystem::path& src, ReportFormat format) {
  std::ifstream in(src);
  if (!in) throw Error("cannot open report " + src.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_report(buf.str(), format);
}

}  // namespace zog
