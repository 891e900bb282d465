// qclab: command-line front end for the query-bounded adversary experiments.
//
// Subcommands:
//   tau            print cap thresholds for a (delta, d) pair
//   boundary-dump  raster of 1-NN labels and error mask on the intervals task
//   run            execute an experiment described by a config file
//
// Exit codes: 0 ok, 2 config error, 3 budget violation, 4 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qclab/adversaries.hpp"
#include "qclab/classifiers.hpp"
#include "qclab/defense.hpp"
#include "qclab/geometry.hpp"
#include "qclab/metrics.hpp"
#include "qclab/tasks.hpp"

using nlohmann::json;
using namespace qclab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;
constexpr int kExitNumerical = 4;

struct ConfigError : std::runtime_error {
  ConfigError(int line, int col, const std::string& msg)
      : std::runtime_error("config error at line " + std::to_string(line) + ", column " +
                           std::to_string(col) + ": " + msg) {}
  explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct IniValue {
  std::string value;
  int line = 0;
  int col = 0;
};

struct IniFile {
  // section "" holds the global keys
  std::map<std::string, std::map<std::string, IniValue>> sections;
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

IniFile parse_ini(std::istream& is) {
  IniFile out;
  std::string section;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']')
        throw ConfigError(lineno, 1, "unterminated section header");
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section.empty()) throw ConfigError(lineno, 1, "empty section name");
      out.sections[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(lineno, 1, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(lineno, 1, "empty key");
    const int col = static_cast<int>(line.find_first_not_of(" \t")) + 1;
    if (out.sections[section].count(key))
      throw ConfigError(lineno, col, "duplicate key '" + key + "'");
    out.sections[section][key] = {trim(line.substr(eq + 1)), lineno, col};
  }
  return out;
}

class ResolvedConfig {
 public:
  ResolvedConfig(IniFile ini, std::string kind) : ini_(std::move(ini)), kind_(std::move(kind)) {}

  const IniValue* find(const std::string& section, const std::string& key) const {
    auto sit = ini_.sections.find(section);
    if (sit == ini_.sections.end()) return nullptr;
    auto kit = sit->second.find(key);
    return kit == sit->second.end() ? nullptr : &kit->second;
  }

  std::string str(const std::string& key, const std::string& fallback) {
    const IniValue* v = find(kind_, key);
    resolved_[key] = v ? v->value : fallback;
    return resolved_[key];
  }

  double num(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const IniValue* v = find(kind_, key);
    if (v == nullptr) {
      if (!fallback) throw ConfigError("missing required key '" + key + "' in [" + kind_ + "]");
      resolved_[key] = format_double(*fallback);
      return *fallback;
    }
    try {
      std::size_t pos = 0;
      const double x = std::stod(v->value, &pos);
      if (pos != v->value.size()) throw std::invalid_argument("");
      resolved_[key] = v->value;
      return x;
    } catch (...) {
      throw ConfigError(v->line, v->col, "key '" + key + "' is not a number: '" + v->value + "'");
    }
  }

  long integer(const std::string& key, std::optional<long> fallback = std::nullopt) {
    const double x = num(key, fallback ? std::optional<double>(static_cast<double>(*fallback))
                                       : std::nullopt);
    const long n = static_cast<long>(std::llround(x));
    if (std::abs(x - n) > 1e-9) {
      const IniValue* v = find(kind_, key);
      throw ConfigError(v ? v->line : 0, v ? v->col : 0, "key '" + key + "' must be an integer");
    }
    return n;
  }

  std::vector<long> integer_list(const std::string& key, const std::string& fallback) {
    const IniValue* v = find(kind_, key);
    const std::string raw = v ? v->value : fallback;
    resolved_[key] = raw;
    std::vector<long> out;
    std::stringstream ss(raw);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell = trim(cell);
      if (cell.empty()) continue;
      try {
        out.push_back(std::stol(cell));
      } catch (...) {
        throw ConfigError(v ? v->line : 0, v ? v->col : 0, "bad integer list entry '" + cell + "'");
      }
    }
    return out;
  }

  void check_unknown_keys(const std::set<std::string>& global_allowed,
                          const std::set<std::string>& kind_allowed) const {
    for (const auto& [section, keys] : ini_.sections) {
      if (section.empty()) {
        for (const auto& [k, v] : keys)
          if (!global_allowed.count(k))
            throw ConfigError(v.line, v.col, "unknown key '" + k + "'");
      } else if (section == kind_) {
        for (const auto& [k, v] : keys)
          if (!kind_allowed.count(k))
            throw ConfigError(v.line, v.col, "unknown key '" + k + "' in [" + section + "]");
      } else {
        throw ConfigError("unexpected section [" + section + "] for kind '" + kind_ + "'");
      }
    }
  }

  json to_json() const {
    json j;
    for (const auto& [k, v] : globals_) j[k] = v;
    json sec;
    for (const auto& [k, v] : resolved_) sec[k] = v;
    j[kind_] = sec;
    return j;
  }

  void set_global(const std::string& k, const std::string& v) { globals_[k] = v; }
  const std::string& kind() const { return kind_; }

 private:
  IniFile ini_;
  std::string kind_;
  std::map<std::string, std::string> resolved_;
  std::map<std::string, std::string> globals_;
};

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + tmp);
    os << content;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

bool all_finite(const std::vector<double>& xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

struct KindResult {
  std::string csv;
  json summary;
  std::vector<double> numeric_cells;  // scanned for NaN/Inf before writing
  int exit_code = kExitOk;
  std::string stdout_table;
  std::map<std::string, std::string> extra_files;  // output suffix -> content
};

// ---------------------------------------------------------------------------

KindResult run_tau(ResolvedConfig& cfg, std::uint64_t) {
  const double delta = cfg.num("delta");
  const int d = static_cast<int>(cfg.integer("d"));
  const std::string model = cfg.str("model", "exact");
  if (model != "exact" && model != "gaussian") throw ConfigError("model must be exact or gaussian");
  const CapModel cm = model == "exact" ? CapModel::exact : CapModel::gaussian;
  const double tau = cap_threshold(delta, d, cm);
  const double fraction = cm == CapModel::exact ? detail::cap_fraction_signed(tau, d)
                                                : gaussian_tail(tau * std::sqrt(static_cast<double>(d)));
  const double residual = std::abs(fraction - delta);
  KindResult out;
  std::ostringstream csv;
  csv << "model,delta,d,tau,sqrt_d_tau,roundtrip_residual\n";
  csv << model << "," << format_double(delta) << "," << d << "," << format_double(tau) << ","
      << format_double(tau * std::sqrt(static_cast<double>(d))) << "," << format_double(residual)
      << "\n";
  out.csv = csv.str();
  out.summary = {{"tau", tau},
                 {"sqrt_d_tau", tau * std::sqrt(static_cast<double>(d))},
                 {"roundtrip_residual", residual}};
  out.numeric_cells = {tau, residual};
  std::ostringstream tbl;
  tbl << "tau(" << delta << ", d=" << d << ", " << model << ") = " << format_double(tau)
      << "  sqrt(d)*tau = " << format_double(tau * std::sqrt(static_cast<double>(d)))
      << "  roundtrip residual = " << format_double(residual) << "\n";
  out.stdout_table = tbl.str();
  return out;
}

KindResult run_cap_attack(ResolvedConfig& cfg, std::uint64_t seed) {
  const int d = static_cast<int>(cfg.integer("d"));
  const double delta = cfg.num("delta", 0.01);
  const int s = static_cast<int>(cfg.integer("s"));
  const int trials = static_cast<int>(cfg.integer("trials", 200));
  const int n_mc = static_cast<int>(cfg.integer("n_mc", 4000));
  const double alpha = cfg.num("alpha", 0.5);
  const bool dump_transcript = cfg.integer("transcript", 0) != 0;

  const double eps = cap_threshold(delta, d);
  const GroundTruth h{ConcentricSpheresTask{d}};
  const Task task = ConcentricSpheresTask{d};
  RngStream master(seed);
  KindResult out;
  std::ostringstream csv;
  csv << "trial,queries_used,hits,ar_p,ar_opt,success\n";
  int successes = 0;
  std::string transcript_text;
  for (int t = 0; t < trials; ++t) {
    RngStream rng = master.substream(t);
    auto e = std::make_shared<const CapErrorSet>(
        sample_cap_error(d, delta, 1, CapsVariant::iid, rng));
    CountingOracle oracle(implant_classifier(h, e), 2L * s);
    auto rep = cap_adversary_randomized(oracle, d, s, eps, rng);
    long hits = 0;
    for (const auto& q : rep.transcript)
      if (e->contains(q.point)) ++hits;
    RngStream eval = rng.substream(0xe);
    const double ar_p =
        estimate_ar_of_perturbation(oracle.rule(), rep.perturbation, task, n_mc, eval).value;
    const double ar_opt = estimate_ar_opt_cap(*e, d, eps, n_mc, eval).est.value;
    const bool success = success_event(ar_p, ar_opt, alpha);
    if (success) ++successes;
    csv << t << "," << rep.queries_used << "," << hits << "," << format_double(ar_p) << ","
        << format_double(ar_opt) << "," << (success ? 1 : 0) << "\n";
    out.numeric_cells.push_back(ar_p);
    out.numeric_cells.push_back(ar_opt);
    if (t == 0 && dump_transcript) {
      std::ostringstream ts;
      write_transcript_jsonl(ts, rep);
      transcript_text = ts.str();
    }
  }
  const double rate = static_cast<double>(successes) / trials;
  out.csv = csv.str();
  out.summary = {{"success_rate", rate}, {"trials", trials}, {"eps", eps}};
  std::ostringstream tbl;
  tbl << "cap-attack d=" << d << " delta=" << delta << " s=" << s << ": success rate " << rate
      << " over " << trials << " trials\n";
  out.stdout_table = tbl.str();
  if (!transcript_text.empty()) out.extra_files[".transcript.jsonl"] = transcript_text;
  return out;
}

KindResult run_emulate(ResolvedConfig& cfg, std::uint64_t seed) {
  const std::string variant = cfg.str("variant", "iid");
  if (variant != "iid" && variant != "general")
    throw ConfigError("variant must be iid or general");
  const int d = static_cast<int>(cfg.integer("d"));
  const int k = static_cast<int>(cfg.integer("k"));
  const double delta = cfg.num("delta", 0.01);
  const int inner_s = static_cast<int>(cfg.integer("inner_s"));
  const int trials = static_cast<int>(cfg.integer("trials", 100));
  const int n_mc = static_cast<int>(cfg.integer("n_mc", 2000));

  const double tau = cap_threshold(delta / k, d);
  const double eps = tau;
  const GroundTruth h{ConcentricSpheresTask{d}};
  const Task task = ConcentricSpheresTask{d};
  RngStream master(seed);
  KindResult out;
  std::ostringstream csv;
  csv << "trial,inner_queries,queries_used,free_queries,mu_pinv,mu_dilated,success\n";
  int successes = 0;
  for (int t = 0; t < trials; ++t) {
    RngStream rng = master.substream(t);
    auto e = std::make_shared<const CapErrorSet>(
        sample_cap_error(d, delta / k, 1, CapsVariant::iid, rng));
    CountingOracle oracle(implant_classifier(h, e));
    InnerAdversary inner = [&](CountingOracle& o, RngStream& r) {
      return cap_adversary_randomized(o, d, inner_s, eps, r);
    };
    AdversaryReport rep;
    std::vector<CapComponent> check_comps = e->components();
    long inner_queries = 2L * inner_s;
    if (variant == "iid") {
      auto res = emulate_iid(oracle, inner, delta, k, d, rng);
      rep = std::move(res.report);
      for (const auto& c : res.decoys) check_comps.push_back(c);
    } else {
      DirectionSampler G = [&](RngStream& r) {
        std::vector<Vec> ys;
        for (int i = 0; i < k; ++i) ys.push_back(sample_uniform_sphere(d, 1.0, r));
        return ys;
      };
      auto res = emulate_general(oracle, inner, G, k, d, rng);
      rep = std::move(res.report);
      // transformed copies M(R_i(T_i(C))) of the hidden component
      const auto& c0 = e->components()[0];
      check_comps.clear();
      for (int i = 0; i < k; ++i) {
        const int sign = res.signs[i] < 0 ? -c0.sign : c0.sign;
        Vec axis = res.M->apply((*res.rotations)[i].apply(c0.axis));
        check_comps.push_back({axis.normalized(), sign});
      }
    }
    const CapErrorSet check(delta, k, tau, check_comps);
    RngStream eval = rng.substream(0xe);
    const double mu_pinv =
        estimate_ar_of_perturbation(oracle.rule(), rep.perturbation, task, n_mc, eval).value;
    const double mu_dilated =
        measure_of_set(task, [&](const Vec& x) { return check.dilated_contains(x, eps); }, n_mc,
                       eval).value;
    const bool success = mu_pinv >= mu_dilated / (2.0 * k);
    if (success) ++successes;
    csv << t << "," << inner_queries << "," << rep.queries_used << "," << rep.free_queries << ","
        << format_double(mu_pinv) << "," << format_double(mu_dilated) << "," << (success ? 1 : 0)
        << "\n";
    out.numeric_cells.push_back(mu_pinv);
    out.numeric_cells.push_back(mu_dilated);
  }
  const double rate = static_cast<double>(successes) / trials;
  out.csv = csv.str();
  out.summary = {{"success_rate", rate}, {"trials", trials}, {"eps", eps}, {"k", k}};
  std::ostringstream tbl;
  tbl << "emulate-" << variant << " k=" << k << " d=" << d << ": success rate " << rate << " over "
      << trials << " trials\n";
  out.stdout_table = tbl.str();
  return out;
}

KindResult run_two_intervals(ResolvedConfig& cfg, std::uint64_t seed) {
  const double z = cfg.num("z", 3.0);
  const double m = cfg.num("m", 500.0);
  const int datasets = static_cast<int>(cfg.integer("datasets", 50));
  const long den = cfg.integer("grid_step_den", 2000);
  const double eps = z / 10.0;
  RngStream master(seed);
  KindResult out;
  std::ostringstream csv;
  csv << "dataset,interior,ends,exact_normalized,grid_normalized,rel_diff\n";
  double sum_rel = 0.0, max_rel = 0.0;
  for (int i = 0; i < datasets; ++i) {
    RngStream rng = master.substream(i);
    auto sample = sample_two_intervals_poisson(m, z, rng);
    const auto exact = two_intervals_ar_exact(sample.data, eps);
    const auto grid = two_intervals_ar_grid(sample.data, eps, z / static_cast<double>(den));
    const double rel = grid.normalized > 0
                           ? (exact.normalized - grid.normalized) / grid.normalized
                           : 0.0;
    sum_rel += rel;
    max_rel = std::max(max_rel, std::abs(rel));
    csv << i << "," << format_double(exact.interior_length) << ","
        << format_double(exact.end_length) << "," << format_double(exact.normalized) << ","
        << format_double(grid.normalized) << "," << format_double(rel) << "\n";
    out.numeric_cells.push_back(exact.normalized);
    out.numeric_cells.push_back(grid.normalized);
  }
  out.csv = csv.str();
  out.summary = {{"mean_rel_diff", sum_rel / datasets}, {"max_abs_rel_diff", max_rel}};
  std::ostringstream tbl;
  tbl << "two-intervals z=" << z << " m=" << m << ": mean rel diff " << sum_rel / datasets
      << ", max |rel| " << max_rel << " over " << datasets << " datasets\n";
  out.stdout_table = tbl.str();
  return out;
}

KindResult run_qc_curve(ResolvedConfig& cfg, std::uint64_t seed, int workers) {
  QCExperimentConfig qc;
  const std::string setup = cfg.str("setup", "cap");
  if (setup == "cap") {
    qc.setup = AdversarySetup::cap_randomized;
    qc.d = static_cast<int>(cfg.integer("d", 200));
    qc.delta = cfg.num("delta", 0.01);
  } else if (setup == "line") {
    qc.setup = AdversarySetup::line_binary_search;
    qc.m = cfg.num("m", 1000.0);
    qc.z = cfg.num("z", 2.0);
    qc.n_train = static_cast<int>(cfg.integer("n_train", 400));
  } else {
    throw ConfigError("setup must be cap or line");
  }
  qc.alpha = cfg.num("alpha", 0.5);
  qc.kappa = cfg.num("kappa", 0.01);
  qc.budgets = cfg.integer_list("budgets", "50,200,800,3200");
  qc.trials = static_cast<int>(cfg.integer("trials", 100));
  qc.n_mc = static_cast<int>(cfg.integer("n_mc", 4000));
  qc.seed = seed;
  qc.workers = workers;
  const auto res = run_qc_experiment(qc);
  KindResult out;
  std::ostringstream csv;
  write_qc_csv(csv, res);
  out.csv = csv.str();
  std::ostringstream sj;
  write_qc_summary_json(sj, res);
  out.summary = json::parse(sj.str());
  out.summary["empirical_qc"] = res.qc_reached ? json(res.empirical_qc) : json("not reached");
  for (const auto& r : res.records) {
    out.numeric_cells.push_back(r.ar_p);
    out.numeric_cells.push_back(r.ar_opt);
  }
  std::ostringstream tbl;
  tbl << "qc-curve (" << setup << "):\n";
  for (const auto& s : res.summary)
    tbl << "  budget " << s.budget << ": success rate " << s.rate << " [" << s.ci_lo << ", "
        << s.ci_hi << "]\n";
  tbl << "  empirical QC: "
      << (res.qc_reached ? std::to_string(res.empirical_qc) : std::string("not reached")) << "\n";
  out.stdout_table = tbl.str();
  if (res.any_violation) out.exit_code = kExitBudget;
  return out;
}

KindResult run_defense_eval(ResolvedConfig& cfg, std::uint64_t seed) {
  const int d = static_cast<int>(cfg.integer("d", 20));
  const double cell = cfg.num("cell", 0.3);
  const double delta = cfg.num("delta", 0.05);
  const int shifts = static_cast<int>(cfg.integer("shifts", 50));
  const int n_mc = static_cast<int>(cfg.integer("n_mc", 20000));
  const int flip_draws = static_cast<int>(cfg.integer("flip_draws", 2000));

  RngStream master(seed);
  RngStream setup_rng = master.substream(0);
  const Task task = ConcentricSpheresTask{d};
  const GroundTruth h{task};
  auto e = std::make_shared<const CapErrorSet>(
      sample_cap_error(d, delta, 1, CapsVariant::iid, setup_rng));
  auto f = implant_classifier(h, e);

  KindResult out;
  std::ostringstream csv;
  csv << "metric,index,value,reference\n";

  // axis-aligned flip probabilities against the per-axis law
  RngStream flip_rng = master.substream(1);
  int row = 0;
  for (double dx : {0.003, 0.01, 0.03}) {
    Vec x = Vec::Constant(d, 0.2);
    Vec y = x;
    y[0] += dx;
    const double cut = x[0] + dx / 2.0;
    auto base = [cut](const Vec& v) { return v[0] >= cut ? 1 : -1; };
    const auto est = flip_probability(base, cell, x, y, flip_draws, flip_rng);
    csv << "flip_axis," << row++ << "," << format_double(est.value) << ","
        << format_double(std::min(dx / cell, 1.0)) << "\n";
    out.numeric_cells.push_back(est.value);
  }
  // general displacements against the union bound
  for (int rep = 0; rep < 3; ++rep) {
    Vec x = sample_uniform_sphere(d, 1.0, flip_rng);
    Vec dx(d);
    for (int i = 0; i < d; ++i) dx[i] = flip_rng.uniform(-0.01, 0.01);
    const auto est = flip_probability(f, cell, x, Vec(x + dx), flip_draws, flip_rng);
    double bound = 0.0;
    for (int i = 0; i < d; ++i) bound += std::min(std::abs(dx[i]) / cell, 1.0);
    csv << "flip_general," << rep << "," << format_double(est.value) << ","
        << format_double(bound) << "\n";
    out.numeric_cells.push_back(est.value);
  }
  // risk inflation over shift draws
  RngStream risk_rng = master.substream(2);
  const double base_risk = estimate_risk(f, task, n_mc, risk_rng).value;
  std::vector<double> ratios;
  for (int i = 0; i < shifts; ++i) {
    auto g = defense_wrap(f, cell, d, risk_rng);
    const double r = estimate_risk(g.as_label_fn(), task, n_mc, risk_rng).value;
    const double ratio = base_risk > 0 ? r / base_risk : 0.0;
    ratios.push_back(ratio);
    csv << "risk_ratio," << i << "," << format_double(ratio) << ",2\n";
    out.numeric_cells.push_back(ratio);
  }
  auto sorted = ratios;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  out.csv = csv.str();
  out.summary = {{"base_risk", base_risk}, {"median_risk_inflation", median}};
  std::ostringstream tbl;
  tbl << "defense-eval d=" << d << " cell=" << cell << ": base risk " << base_risk
      << ", median risk inflation " << median << "\n";
  out.stdout_table = tbl.str();
  return out;
}

KindResult run_boundary_dump_impl(double m, double z, std::uint64_t seed, int resolution) {
  if (resolution < 10) throw ConfigError("resolution >= 10 required");
  RngStream rng(seed);
  auto sample = sample_two_intervals_poisson(m, z, rng);
  OneNNClassifier nn(sample.data);
  const GroundTruth h{sample.data.task};
  KindResult out;
  std::ostringstream csv;
  csv << "x,y,label,in_error_set\n";
  long in_err = 0;
  for (int iy = 0; iy < resolution; ++iy) {
    for (int ix = 0; ix < resolution; ++ix) {
      Vec p(2);
      p[0] = m * ix / (resolution - 1.0);
      p[1] = z * iy / (resolution - 1.0);
      const int label = nn.classify(p);
      const int err = label != h(p) ? 1 : 0;
      in_err += err;
      csv << format_double(p[0]) << "," << format_double(p[1]) << "," << label << "," << err
          << "\n";
    }
  }
  out.csv = csv.str();
  out.summary = {{"grid_points", resolution * resolution}, {"error_cells", in_err}};
  std::ostringstream tbl;
  tbl << "boundary-dump " << resolution << "x" << resolution << " grid, " << in_err
      << " error cells\n";
  out.stdout_table = tbl.str();
  return out;
}

KindResult run_boundary_dump(ResolvedConfig& cfg, std::uint64_t seed) {
  const double m = cfg.num("m", 20.0);
  const double z = cfg.num("z", 2.0);
  const int resolution = static_cast<int>(cfg.integer("resolution", 200));
  return run_boundary_dump_impl(m, z, seed, resolution);
}

const std::map<std::string, std::set<std::string>> kKindKeys = {
    {"tau", {"delta", "d", "model"}},
    {"cap-attack", {"d", "delta", "s", "trials", "n_mc", "alpha", "transcript"}},
    {"emulate", {"variant", "d", "k", "delta", "inner_s", "trials", "n_mc"}},
    {"two-intervals", {"z", "m", "datasets", "grid_step_den"}},
    {"qc-curve",
     {"setup", "d", "delta", "m", "z", "n_train", "alpha", "kappa", "budgets", "trials", "n_mc"}},
    {"defense-eval", {"d", "cell", "delta", "shifts", "n_mc", "flip_draws"}},
    {"boundary-dump", {"m", "z", "resolution"}},
};

int cmd_run(const std::string& config_path) {
  std::ifstream is(config_path);
  if (!is) {
    std::cerr << "config error: cannot open " << config_path << "\n";
    return kExitConfig;
  }
  try {
    IniFile ini = parse_ini(is);
    const auto& globals = ini.sections[""];
    auto need_global = [&](const std::string& key) -> const IniValue& {
      auto it = globals.find(key);
      if (it == globals.end()) throw ConfigError("missing required global key '" + key + "'");
      return it->second;
    };
    const std::string kind = need_global("kind").value;
    if (!kKindKeys.count(kind)) throw ConfigError("unknown experiment kind '" + kind + "'");
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(need_global("seed").value);
    } catch (const ConfigError&) {
      throw;
    } catch (...) {
      const auto& v = globals.at("seed");
      throw ConfigError(v.line, v.col, "seed must be a non-negative integer");
    }
    const std::string output = need_global("output").value;
    int workers = 1;
    if (globals.count("workers")) {
      try {
        workers = std::stoi(globals.at("workers").value);
      } catch (...) {
        const auto& v = globals.at("workers");
        throw ConfigError(v.line, v.col, "workers must be an integer");
      }
    }
    if (const char* env = std::getenv("QCLAB_WORKERS")) workers = std::max(1, std::atoi(env));

    ResolvedConfig cfg(std::move(ini), kind);
    cfg.check_unknown_keys({"kind", "seed", "output", "workers"}, kKindKeys.at(kind));
    cfg.set_global("kind", kind);
    cfg.set_global("seed", std::to_string(seed));
    cfg.set_global("output", output);
    cfg.set_global("workers", std::to_string(workers));

    KindResult res;
    if (kind == "tau")
      res = run_tau(cfg, seed);
    else if (kind == "cap-attack")
      res = run_cap_attack(cfg, seed);
    else if (kind == "emulate")
      res = run_emulate(cfg, seed);
    else if (kind == "two-intervals")
      res = run_two_intervals(cfg, seed);
    else if (kind == "qc-curve")
      res = run_qc_curve(cfg, seed, workers);
    else if (kind == "defense-eval")
      res = run_defense_eval(cfg, seed);
    else
      res = run_boundary_dump(cfg, seed);

    if (!all_finite(res.numeric_cells)) {
      std::cerr << "numerical failure: non-finite value in results\n";
      return kExitNumerical;
    }
    json doc;
    doc["config"] = cfg.to_json();
    doc["summary"] = res.summary;
    atomic_write(output + ".csv", res.csv);
    atomic_write(output + ".json", doc.dump(2) + "\n");
    for (const auto& [suffix, content] : res.extra_files) atomic_write(output + suffix, content);
    {
      const auto now = std::chrono::system_clock::now().time_since_epoch();
      json meta;
      meta["wall_time_unix_ms"] =
          std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
      atomic_write(output + ".meta.json", meta.dump(2) + "\n");
    }
    std::cout << res.stdout_table;
    return res.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query-bounded adversary simulation lab"};
  app.require_subcommand(1);

  auto* tau_cmd = app.add_subcommand("tau", "cap threshold for (delta, d)");
  double tau_delta = 0.01;
  int tau_d = 500;
  std::string tau_model = "exact";
  tau_cmd->add_option("--delta", tau_delta, "cap fraction")->required();
  tau_cmd->add_option("--d", tau_d, "dimension")->required();
  tau_cmd->add_option("--model", tau_model, "exact | gaussian");

  auto* bd_cmd = app.add_subcommand("boundary-dump", "1-NN label raster on the intervals task");
  double bd_m = 20, bd_z = 2;
  std::uint64_t bd_seed = 0;
  int bd_res = 200;
  std::string bd_out;
  bd_cmd->add_option("--m", bd_m, "interval length")->required();
  bd_cmd->add_option("--z", bd_z, "line separation")->required();
  bd_cmd->add_option("--seed", bd_seed, "rng seed")->required();
  bd_cmd->add_option("--resolution", bd_res, "grid points per axis")->required();
  bd_cmd->add_option("--output", bd_out, "output csv path")->required();

  auto* run_cmd = app.add_subcommand("run", "run an experiment config");
  std::string config_path;
  run_cmd->add_option("config", config_path, "config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (tau_cmd->parsed()) {
      if (tau_model != "exact" && tau_model != "gaussian") {
        std::cerr << "config error: model must be exact or gaussian\n";
        return kExitConfig;
      }
      const CapModel cm = tau_model == "exact" ? CapModel::exact : CapModel::gaussian;
      const double tau = cap_threshold(tau_delta, tau_d, cm);
      const double fraction = cm == CapModel::exact
                                  ? detail::cap_fraction_signed(tau, tau_d)
                                  : gaussian_tail(tau * std::sqrt(static_cast<double>(tau_d)));
      std::cout << "tau = " << format_double(tau) << "\n"
                << "sqrt(d)*tau = " << format_double(tau * std::sqrt(static_cast<double>(tau_d)))
                << "\n"
                << "roundtrip residual = " << format_double(std::abs(fraction - tau_delta))
                << "\n";
      return kExitOk;
    }
    if (bd_cmd->parsed()) {
      auto res = run_boundary_dump_impl(bd_m, bd_z, bd_seed, bd_res);
      atomic_write(bd_out, res.csv);
      std::cout << res.stdout_table;
      return kExitOk;
    }
    return cmd_run(config_path);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kExitConfig;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
