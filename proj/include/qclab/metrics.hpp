#pragma once

#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qclab/adversaries.hpp"
#include "qclab/classifiers.hpp"
#include "qclab/geometry.hpp"
#include "qclab/tasks.hpp"

namespace qclab {

// ---------------------------------------------------------------------------
// Risk estimators

inline Estimate estimate_risk(const LabelFn& f, const Task& task, int n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("estimate_risk: n >= 1 required");
  const GroundTruth h{task};
  long errs = 0;
  for (int i = 0; i < n; ++i) {
    const Vec x = sample_from_task(task, rng).point;
    if (f(x) != h(x)) ++errs;
  }
  const double p = static_cast<double>(errs) / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

/// AR(f, p): each sample independently draws its mixture component, which is
/// unbiased for the averaged-transport semantics.
inline Estimate estimate_ar_of_perturbation(const LabelFn& f, const Perturbation& p,
                                            const Task& task, int n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("estimate_ar_of_perturbation: n >= 1 required");
  const GroundTruth h{task};
  long errs = 0;
  for (int i = 0; i < n; ++i) {
    const Vec x = sample_from_task(task, rng).point;
    if (f(p.apply(x, rng)) != h(x)) ++errs;
  }
  const double q = static_cast<double>(errs) / n;
  return {q, std::sqrt(q * (1.0 - q) / n)};
}

struct ArOptEstimate {
  Estimate est;
  bool lower_bound_only = false;
};

/// AR(f, eps) for an implanted cap error set: on-sphere geodesic reachability,
/// with the chord budget eps on S_1 and 1.3 eps on S_1.3.
inline ArOptEstimate estimate_ar_opt_cap(const CapErrorSet& e, int d, double eps, int n,
                                         RngStream& rng) {
  const double theta = 2.0 * std::asin(std::min(eps, 2.0) / 2.0);
  const Task task = ConcentricSpheresTask{d};
  long hits = 0;
  for (int i = 0; i < n; ++i) {
    const Vec x = sample_from_task(task, rng).point;
    if (e.reachable_on_sphere(x, theta)) ++hits;
  }
  const double p = static_cast<double>(hits) / n;
  return {{p, std::sqrt(p * (1.0 - p) / n)}, false};
}

/// AR(f, eps) for a linear separator on the two-intervals strip, closed form.
inline double linear_ar_exact(const LinearSeparator& sep, double m, double z, double eps) {
  auto half_line_length = [&](double a, double b, bool geq) {
    // measure of [0, m] cut by { a x + b >= 0 } (or <= 0)
    if (std::abs(a) < 1e-300) {
      const bool all = geq ? (b >= 0) : (b <= 0);
      return all ? m : 0.0;
    }
    const double root = -b / a;
    const bool right = geq ? (a > 0) : (a < 0);
    if (right) return std::clamp(m - root, 0.0, m);
    return std::clamp(root, 0.0, m);
  };
  const double minus_len = half_line_length(sep.w[0], sep.b + eps, true);
  const double plus_len = half_line_length(sep.w[0], sep.w[1] * z + sep.b - eps, false);
  return (minus_len + plus_len) / (2.0 * m);
}

// ---------------------------------------------------------------------------
// Two-intervals adversarial-risk geometry

/// Per-gap reachable-length geometry for the 1-NN error regions bounded by
/// parabolas: alpha_star minimizes (z/10)(-sin a + 2 sqrt(5) sqrt(5 - cos a)),
/// x_star = sqrt(5) sqrt(5 - cos a*) z / 5, and nu(l) is the length a same-line
/// gap of size l contributes.
struct ParabolaGeometry {
  double z = 0.0;
  double alpha_star = 0.0;
  double x_star = 0.0;
  double l_min = 0.0;  // 4 sqrt(5) z / 5

  static ParabolaGeometry make(double z) {
    if (z <= 0) throw std::invalid_argument("ParabolaGeometry: z > 0 required");
    ParabolaGeometry g;
    g.z = z;
    auto objective = [z](double a) {
      return (z / 10.0) * (-std::sin(a) + 2.0 * std::sqrt(5.0) * std::sqrt(5.0 - std::cos(a)));
    };
    // golden-section to 1e-10 (the objective is unimodal on [0, pi/2])
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0, hi = M_PI / 2.0;
    double c = hi - gr * (hi - lo), dpt = lo + gr * (hi - lo);
    double fc = objective(c), fd = objective(dpt);
    while (hi - lo > 1e-12) {
      if (fc < fd) {
        hi = dpt;
        dpt = c;
        fd = fc;
        c = hi - gr * (hi - lo);
        fc = objective(c);
      } else {
        lo = c;
        c = dpt;
        fc = fd;
        dpt = lo + gr * (hi - lo);
        fd = objective(dpt);
      }
    }
    g.alpha_star = 0.5 * (lo + hi);
    g.x_star = std::sqrt(5.0) * std::sqrt(5.0 - std::cos(g.alpha_star)) * z / 5.0;
    g.l_min = 4.0 * std::sqrt(5.0) * z / 5.0;
    return g;
  }

  double nu(double l) const {
    if (l < l_min) return 0.0;
    if (l <= 2.0 * x_star) {
      // z^2/100 - (z/2 - l^2/(8z))^2 in the factored form u (z/5 - u) with
      // u = (l - l_min)(l + l_min)/(8z), exact at the left junction
      const double u = (l - l_min) * (l + l_min) / (8.0 * z);
      const double v = z / 5.0 - u;
      return 2.0 * std::sqrt(std::max(u * std::max(v, 0.0), 0.0));
    }
    return l - 2.0 * x_star + (2.0 * z / 10.0) * std::sin(alpha_star);
  }
};

struct AlphaStar {
  double alpha_star;
  double x_star;
};

inline AlphaStar solve_alpha_star(double z) {
  const auto g = ParabolaGeometry::make(z);
  return {g.alpha_star, g.x_star};
}

namespace detail {

inline std::vector<double> line_xs(const Dataset& ds, double y) {
  std::vector<double> xs;
  for (const auto& s : ds.samples)
    if (s.point[1] == y) xs.push_back(s.point[0]);
  std::sort(xs.begin(), xs.end());
  return xs;
}

inline double nearest_x_dist(const std::vector<double>& xs, double x) {
  if (xs.empty()) return std::numeric_limits<double>::infinity();
  auto it = std::lower_bound(xs.begin(), xs.end(), x);
  double best = std::numeric_limits<double>::infinity();
  if (it != xs.end()) best = std::min(best, std::abs(*it - x));
  if (it != xs.begin()) best = std::min(best, std::abs(*(it - 1) - x));
  return best;
}

/// Reachable length on one line over the given x-segments, against the actual
/// 1-NN rule. In every column wx the adversely-labeled region is the half
/// column beyond depth(wx) = max((z^2 + u_opp^2 - u_own^2) / 2z, 0) measured
/// from the own line, so reachability from (x, own height) is the disk test
/// (wx - x)^2 + depth(wx)^2 < eps^2.
inline double grid_reachable_on_segments(const std::vector<double>& own,
                                         const std::vector<double>& opp, double m, double z,
                                         double eps, double step,
                                         const std::vector<std::pair<double, double>>& segs) {
  double total = 0.0;
  for (const auto& [a0, b0] : segs) {
    const double a = std::max(a0, 0.0), b = std::min(b0, m);
    if (b <= a) continue;
    const double wa = a - eps, wb = b + eps;
    const int nw = static_cast<int>(std::ceil((wb - wa) / step)) + 1;
    std::vector<double> depth(nw);
    for (int i = 0; i < nw; ++i) {
      const double wx = wa + i * step;
      const double uo = nearest_x_dist(own, wx);
      const double up = nearest_x_dist(opp, wx);
      double dpt = (z * z + up * up - uo * uo) / (2.0 * z);
      if (std::isinf(up)) dpt = std::numeric_limits<double>::infinity();
      if (std::isinf(uo)) dpt = 0.0;
      depth[i] = std::max(dpt, 0.0);
    }
    const int nx = static_cast<int>(std::floor((b - a) / step));
    const int window = static_cast<int>(std::ceil(eps / step)) + 1;
    long reach = 0;
    for (int j = 0; j < nx; ++j) {
      const double x = a + (j + 0.5) * step;
      const int center = static_cast<int>(std::round((x - wa) / step));
      bool ok = false;
      for (int o = -window; o <= window && !ok; ++o) {
        const int idx = center + o;
        if (idx < 0 || idx >= nw) continue;
        const double dx = (wa + idx * step) - x;
        const double dd = depth[idx];
        if (dx * dx + dd * dd < eps * eps) ok = true;
      }
      if (ok) ++reach;
    }
    total += reach * step;
  }
  return total;
}

inline std::vector<std::pair<double, double>> candidate_segments(const std::vector<double>& own,
                                                                 double m, double z, double eps,
                                                                 double step, bool include_ends,
                                                                 bool include_gaps) {
  std::vector<std::pair<double, double>> segs;
  const double l_min = 2.0 * std::sqrt(std::max(z * z - 2.0 * z * eps, 0.0));
  if (own.empty()) {
    if (include_ends) segs.push_back({0.0, m});
    return segs;
  }
  if (include_gaps) {
    for (std::size_t i = 0; i + 1 < own.size(); ++i)
      if (own[i + 1] - own[i] > l_min - 2.0 * step) segs.push_back({own[i], own[i + 1]});
  }
  if (include_ends) {
    segs.insert(segs.begin(), {0.0, own.front()});
    segs.push_back({own.back(), m});
  }
  return segs;
}

}  // namespace detail

struct TwoIntervalsGridAr {
  double reachable_length = 0.0;  // both lines
  double normalized = 0.0;        // divided by the support length 2m
};

/// Independent brute-force oracle: rasterizes the support at the given step
/// and tests eps-reachability of the actual 1-NN adverse region. The scan is
/// restricted to gaps wide enough to possibly contribute (narrower gaps are
/// provably inert) plus the two end segments of each line.
inline TwoIntervalsGridAr two_intervals_ar_grid(const Dataset& ds, double eps, double step) {
  const auto* ti = std::get_if<TwoIntervalsTask>(&ds.task);
  if (ti == nullptr) throw std::invalid_argument("two_intervals_ar_grid: intervals dataset required");
  const double m = ti->m, z = ti->z;
  const auto minus = detail::line_xs(ds, 0.0);
  const auto plus = detail::line_xs(ds, z);
  TwoIntervalsGridAr out;
  out.reachable_length += detail::grid_reachable_on_segments(
      plus, minus, m, z, eps, step, detail::candidate_segments(plus, m, z, eps, step, true, true));
  out.reachable_length += detail::grid_reachable_on_segments(
      minus, plus, m, z, eps, step, detail::candidate_segments(minus, m, z, eps, step, true, true));
  out.normalized = out.reachable_length / (2.0 * m);
  return out;
}

struct TwoIntervalsArExact {
  double interior_length = 0.0;  // sum of nu over interior same-line gaps
  double end_length = 0.0;       // end intervals, brute-forced separately
  double normalized = 0.0;       // (interior + ends) / 2m
};

/// The per-gap closed-form route. Covers eps = z/10 (the regime the gap
/// formulas describe); other eps values belong to the grid oracle.
inline TwoIntervalsArExact two_intervals_ar_exact(const Dataset& ds, double eps,
                                                  double end_grid_step = 0.0) {
  const auto* ti = std::get_if<TwoIntervalsTask>(&ds.task);
  if (ti == nullptr) throw std::invalid_argument("two_intervals_ar_exact: intervals dataset required");
  const double m = ti->m, z = ti->z;
  if (std::abs(eps - z / 10.0) > 1e-12)
    throw std::invalid_argument("two_intervals_ar_exact: only eps = z/10 is covered; use the grid oracle");
  if (end_grid_step <= 0.0) end_grid_step = z / 2000.0;
  const auto geom = ParabolaGeometry::make(z);
  const auto minus = detail::line_xs(ds, 0.0);
  const auto plus = detail::line_xs(ds, z);
  TwoIntervalsArExact out;
  for (const auto* line : {&minus, &plus})
    for (std::size_t i = 0; i + 1 < line->size(); ++i)
      out.interior_length += geom.nu((*line)[i + 1] - (*line)[i]);
  out.end_length += detail::grid_reachable_on_segments(
      plus, minus, m, z, eps, end_grid_step,
      detail::candidate_segments(plus, m, z, eps, end_grid_step, true, false));
  out.end_length += detail::grid_reachable_on_segments(
      minus, plus, m, z, eps, end_grid_step,
      detail::candidate_segments(minus, m, z, eps, end_grid_step, true, false));
  out.normalized = (out.interior_length + out.end_length) / (2.0 * m);
  return out;
}

/// Generic fallback for AR(f, eps): random directions with a coarse line scan.
/// Reported as a lower bound only.
inline ArOptEstimate estimate_ar_opt_fallback(const LabelFn& f, const Task& task, double eps,
                                              int n, int directions, RngStream& rng) {
  const GroundTruth h{task};
  const int d = task_dim(task);
  long hits = 0;
  for (int i = 0; i < n; ++i) {
    const Vec x = sample_from_task(task, rng).point;
    const int hx = h(x);
    bool found = f(x) != hx;
    for (int k = 0; k < directions && !found; ++k) {
      const Vec g = sample_uniform_sphere(d, 1.0, rng);
      for (double t : {1.0, 2.0 / 3.0, 1.0 / 3.0}) {
        if (f(x + (t * eps) * g) != hx) {
          found = true;
          break;
        }
      }
    }
    if (found) ++hits;
  }
  const double p = static_cast<double>(hits) / n;
  return {{p, std::sqrt(p * (1.0 - p) / n)}, true};
}

// ---------------------------------------------------------------------------
// Success events and bound calculators

inline bool success_event(double ar_p, double ar_opt, double alpha) {
  return ar_p >= alpha * ar_opt;
}

/// Conservative variant for acceptance runs: requires the event to hold with
/// two standard errors of slack on both estimates.
inline bool success_event_ci(const Estimate& ar_p, const Estimate& ar_opt, double alpha) {
  return ar_p.value - 2.0 * ar_p.stderr_ >= alpha * (ar_opt.value + 2.0 * ar_opt.stderr_);
}

/// QC >= log2((1 - kappa) / consistency_prob), in bits.
inline double theorem1_lower_bound(double consistency_prob, double kappa) {
  if (consistency_prob < 0.0 || consistency_prob > 1.0 || kappa < 0.0 || kappa > 1.0)
    throw std::domain_error("theorem1_lower_bound: arguments in [0, 1] required");
  if (consistency_prob == 0.0) return std::numeric_limits<double>::infinity();
  return std::log2((1.0 - kappa) / consistency_prob);
}

/// QC >= log2(eta / (3 C delta)), clipped at zero.
inline double theorem3_bound(double eta, double C, double delta) {
  if (!(eta > 0 && C > 0 && delta > 0))
    throw std::domain_error("theorem3_bound: positive arguments required");
  return std::max(0.0, std::log2(eta / (3.0 * C * delta)));
}

/// The perturbation-budget scale log(eta / delta) / d (natural log).
inline double bestepsilon_quantity(double eta, double delta, int d) {
  if (!(eta >= delta && delta > 0 && d >= 1))
    throw std::domain_error("bestepsilon_quantity: eta >= delta > 0, d >= 1 required");
  return std::log(eta / delta) / d;
}

/// Fraction of freshly trained 1-NN classifiers whose error set captures at
/// least half of AR(f, eps) under the fixed transport p. Feeds Theorem 1's
/// bound; the family sup outside is a lower bound on the true sup.
inline double estimate_consistency_prob_onenn(const Perturbation& p, double m, double z, double eps,
                                              int trials, int n_probe, RngStream& rng,
                                              double grid_step = 0.0) {
  if (grid_step <= 0.0) grid_step = z / 500.0;
  int consistent = 0;
  for (int t = 0; t < trials; ++t) {
    RngStream tr = rng.substream(t);
    auto sample = sample_two_intervals_poisson(m, z, tr);
    const OneNNClassifier nn(sample.data);
    const double ar = two_intervals_ar_grid(sample.data, eps, grid_step).normalized;
    long hits = 0;
    RngStream pr = tr.substream(1);
    const GroundTruth h{sample.data.task};
    for (int i = 0; i < n_probe; ++i) {
      const Vec x = sample_from_task(sample.data.task, pr).point;
      const Vec w = p.apply(x, pr);
      if (nn.classify(w) != h(x)) ++hits;
    }
    if (static_cast<double>(hits) / n_probe >= 0.5 * ar) ++consistent;
  }
  return static_cast<double>(consistent) / trials;
}

// ---------------------------------------------------------------------------
// QC experiment harness

enum class AdversarySetup { cap_randomized, line_binary_search };

struct QCExperimentConfig {
  AdversarySetup setup = AdversarySetup::cap_randomized;
  // cap setup
  int d = 200;
  double delta = 0.01;
  // line setup
  double m = 1000.0;
  double z = 2.0;
  int n_train = 400;
  double eps = 0.0;  // <= 0: setup default (tau(delta) resp. z/10)
  double alpha = 0.5;
  double kappa = 0.01;
  std::vector<long> budgets;
  int trials = 100;
  int n_mc = 4000;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct QCTrialRecord {
  long budget = 0;
  int trial = 0;
  long queries_used = 0;
  double ar_p = 0.0;
  double ar_opt = 0.0;
  bool success = false;
  bool budget_violation = false;
};

struct QCBudgetSummary {
  long budget = 0;
  double rate = 0.0, ci_lo = 0.0, ci_hi = 0.0;
};

struct QCExperimentResult {
  std::vector<QCTrialRecord> records;
  std::vector<QCBudgetSummary> summary;
  long empirical_qc = -1;
  bool qc_reached = false;
  bool any_violation = false;
};

namespace detail {

inline QCTrialRecord run_cap_trial(const QCExperimentConfig& cfg, long budget, int trial,
                                   RngStream rng) {
  QCTrialRecord rec;
  rec.budget = budget;
  rec.trial = trial;
  const double eps = cfg.eps > 0 ? cfg.eps : cap_threshold(cfg.delta, cfg.d);
  auto e = std::make_shared<const CapErrorSet>(
      sample_cap_error(cfg.d, cfg.delta, 1, CapsVariant::iid, rng));
  const GroundTruth h{ConcentricSpheresTask{cfg.d}};
  CountingOracle oracle(implant_classifier(h, e), budget);
  AdversaryReport rep;
  try {
    const int s = static_cast<int>(budget / 2);
    if (s >= 1) {
      rep = cap_adversary_randomized(oracle, cfg.d, s, eps, rng);
    } else {
      // query-free prior guess: push toward a random direction
      rep.perturbation = cap_push_perturbation(sample_uniform_sphere(cfg.d, 1.0, rng), eps);
      rep.randomized = true;
    }
  } catch (const BudgetExceeded&) {
    rec.budget_violation = true;
    rec.queries_used = oracle.queries();
    return rec;
  }
  rec.queries_used = rep.queries_used;
  const Task task = ConcentricSpheresTask{cfg.d};
  RngStream eval = rng.substream(0xe);
  rec.ar_p = estimate_ar_of_perturbation(oracle.rule(), rep.perturbation, task, cfg.n_mc, eval).value;
  rec.ar_opt = estimate_ar_opt_cap(*e, cfg.d, eps, cfg.n_mc, eval).est.value;
  rec.success = success_event(rec.ar_p, rec.ar_opt, cfg.alpha);
  return rec;
}

inline QCTrialRecord run_line_trial(const QCExperimentConfig& cfg, long budget, int trial,
                                    RngStream rng) {
  QCTrialRecord rec;
  rec.budget = budget;
  rec.trial = trial;
  const double eps = cfg.eps > 0 ? cfg.eps : cfg.z / 10.0;
  auto data = sample_two_intervals_iid(cfg.n_train, cfg.m, cfg.z, rng);
  const LinearSeparator sep = train_linear_erm(data, rng);
  CountingOracle oracle(sep.as_label_fn(), budget);
  AdversaryReport rep;
  try {
    const int steps = static_cast<int>(budget / 2);
    if (steps >= 1) {
      const double tol = cfg.z * std::pow(2.0, -steps);
      rep = binary_search_line_attack(oracle, cfg.m, cfg.z, tol, eps).report;
    } else {
      rep.perturbation = Perturbation::identity(eps);
    }
  } catch (const BudgetExceeded&) {
    rec.budget_violation = true;
    rec.queries_used = oracle.queries();
    return rec;
  }
  rec.queries_used = rep.queries_used;
  const Task task = TwoIntervalsTask{cfg.m, cfg.z};
  RngStream eval = rng.substream(0xe);
  rec.ar_p = estimate_ar_of_perturbation(oracle.rule(), rep.perturbation, task, cfg.n_mc, eval).value;
  rec.ar_opt = linear_ar_exact(sep, cfg.m, cfg.z, eps);
  rec.success = success_event(rec.ar_p, rec.ar_opt, cfg.alpha);
  return rec;
}

}  // namespace detail

/// Runs trials for every budget in the grid. Each (budget, trial) cell owns a
/// private substream of the master seed, so the result is identical for any
/// worker count.
inline QCExperimentResult run_qc_experiment(const QCExperimentConfig& cfg) {
  if (cfg.budgets.empty()) throw std::invalid_argument("run_qc_experiment: budgets required");
  for (std::size_t i = 1; i < cfg.budgets.size(); ++i)
    if (cfg.budgets[i] <= cfg.budgets[i - 1])
      throw std::invalid_argument("run_qc_experiment: budgets must be strictly increasing");
  if (!(cfg.alpha >= 0 && cfg.alpha <= 1 && cfg.kappa >= 0 && cfg.kappa <= 1))
    throw std::invalid_argument("run_qc_experiment: alpha, kappa in [0, 1] required");
  QCExperimentResult out;
  const std::size_t cells = cfg.budgets.size() * static_cast<std::size_t>(cfg.trials);
  out.records.resize(cells);
  RngStream master(cfg.seed);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= cells) return;
      const std::size_t bi = idx / cfg.trials;
      const int trial = static_cast<int>(idx % cfg.trials);
      RngStream rng = master.substream(idx);
      out.records[idx] = cfg.setup == AdversarySetup::cap_randomized
                             ? detail::run_cap_trial(cfg, cfg.budgets[bi], trial, rng)
                             : detail::run_line_trial(cfg, cfg.budgets[bi], trial, rng);
    }
  };
  const int nw = std::max(cfg.workers, 1);
  if (nw == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t bi = 0; bi < cfg.budgets.size(); ++bi) {
    long succ = 0;
    for (int t = 0; t < cfg.trials; ++t) {
      const auto& rec = out.records[bi * cfg.trials + t];
      if (rec.success) ++succ;
      if (rec.budget_violation) out.any_violation = true;
    }
    const double rate = static_cast<double>(succ) / cfg.trials;
    const double half = 1.96 * std::sqrt(rate * (1.0 - rate) / cfg.trials);
    out.summary.push_back({cfg.budgets[bi], rate, std::max(0.0, rate - half), std::min(1.0, rate + half)});
    if (!out.qc_reached && rate >= 1.0 - cfg.kappa) {
      out.qc_reached = true;
      out.empirical_qc = cfg.budgets[bi];
    }
  }
  return out;
}

/// CSV export: budget,trial,queries_used,ar_p,ar_opt,success
inline void write_qc_csv(std::ostream& os, const QCExperimentResult& res) {
  os << "budget,trial,queries_used,ar_p,ar_opt,success\n";
  for (const auto& r : res.records)
    os << r.budget << "," << r.trial << "," << r.queries_used << "," << format_double(r.ar_p)
       << "," << format_double(r.ar_opt) << "," << (r.success ? 1 : 0) << "\n";
}

/// JSON summary: {"<budget>": [rate, ci_lo, ci_hi], ...}
inline void write_qc_summary_json(std::ostream& os, const QCExperimentResult& res) {
  os << "{";
  for (std::size_t i = 0; i < res.summary.size(); ++i) {
    const auto& s = res.summary[i];
    if (i) os << ", ";
    os << "\"" << s.budget << "\": [" << format_double(s.rate) << ", " << format_double(s.ci_lo)
       << ", " << format_double(s.ci_hi) << "]";
  }
  os << "}";
}

}  // namespace qclab
