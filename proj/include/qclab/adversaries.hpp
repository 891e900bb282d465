#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qclab/classifiers.hpp"
#include "qclab/geometry.hpp"
#include "qclab/tasks.hpp"

namespace qclab {

/// Certified eps-bounded transport map. A mixture applies one of its k
/// component transports chosen uniformly per call; its pulled-back mass is the
/// average of the components', which is how the emulation lemma reads it.
struct Perturbation {
  enum class Kind { deterministic, mixture };

  Kind kind = Kind::deterministic;
  double eps = 0.0;
  std::function<Vec(const Vec&)> map;
  std::vector<std::function<Vec(const Vec&)>> components;

  Vec apply(const Vec& x, RngStream& rng) const {
    if (kind == Kind::deterministic) return map(x);
    return components[rng.uniform_int(components.size())](x);
  }

  static Perturbation identity(double eps = 0.0) {
    Perturbation p;
    p.eps = eps;
    p.map = [](const Vec& x) { return x; };
    return p;
  }
};

struct QueryRecord {
  Vec point;
  int answer;
};

struct AdversaryReport {
  Perturbation perturbation;
  long queries_used = 0;
  long free_queries = 0;  // decoy-resolved answers in EmulateIID accounting
  std::vector<QueryRecord> transcript;
  bool randomized = false;  // whether the adversary consumed random bits
  bool failed = false;      // e.g. degenerate oracle in the line attack
};

/// Transcript audit format: one {"q": [...], "a": -1|1} object per line.
inline void write_transcript_jsonl(std::ostream& os, const AdversaryReport& rep) {
  for (const auto& q : rep.transcript) {
    os << "{\"q\": [";
    for (int i = 0; i < q.point.size(); ++i) {
      if (i) os << ", ";
      os << format_double(q.point[i]);
    }
    os << "], \"a\": " << q.answer << "}\n";
  }
}

inline void write_transcript_jsonl(const std::string& path, const AdversaryReport& rep) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  write_transcript_jsonl(os, rep);
}

// ---------------------------------------------------------------------------
// Cap adversaries (concentric spheres)

/// Geodesic step used by the cap adversaries: rotate x by angle theta toward
/// the component of v tangential at x. This is the argsup of <x' - x, v> over
/// the on-sphere eps-ball; a vanishing tangential component degenerates to
/// the identity. Points on S_1 move by chord eps, points on S_1.3 by 1.3 eps.
inline Perturbation cap_push_perturbation(const Vec& v, double eps) {
  const double theta = 2.0 * std::asin(std::min(eps, 2.0) / 2.0);
  Perturbation p;
  p.eps = 1.3 * eps;
  p.map = [v, theta](const Vec& x) -> Vec {
    const double r = x.norm();
    if (std::abs(r - 1.0) > 1e-9 && std::abs(r - 1.3) > 1e-9) return x;
    const Vec xh = x / r;
    Vec t = v - v.dot(xh) * xh;
    const double tn = t.norm();
    if (tn < 1e-12) return x;
    return r * (std::cos(theta) * xh + (std::sin(theta) / tn) * t);
  };
  return p;
}

namespace detail {
inline AdversaryReport cap_adversary_core(CountingOracle& oracle, const std::vector<Vec>& q_minus,
                                          const std::vector<Vec>& q_plus, double eps) {
  AdversaryReport rep;
  Vec sum;
  long hits = 0;
  auto ask = [&](const Vec& x, int error_answer) {
    const int a = oracle.classify(x);
    rep.transcript.push_back({x, a});
    if (a == error_answer) {
      if (hits == 0)
        sum = x;
      else
        sum += x;
      ++hits;
    }
  };
  for (const auto& x : q_minus) ask(x, +1);
  for (const auto& x : q_plus) ask(x, -1);
  rep.queries_used = static_cast<long>(q_minus.size() + q_plus.size());
  if (hits == 0) {
    rep.perturbation = Perturbation::identity(1.3 * eps);
    return rep;
  }
  rep.perturbation = cap_push_perturbation(sum / static_cast<double>(hits), eps);
  return rep;
}
}  // namespace detail

/// Queries s i.i.d. points per sphere, averages the misclassified ones and
/// pushes every sphere point toward that direction.
inline AdversaryReport cap_adversary_randomized(CountingOracle& oracle, int d, int s, double eps,
                                                RngStream& rng) {
  if (s < 1) throw std::invalid_argument("cap_adversary_randomized: s >= 1 required");
  std::vector<Vec> q_minus(s), q_plus(s);
  for (int i = 0; i < s; ++i) q_minus[i] = sample_uniform_sphere(d, 1.0, rng);
  for (int i = 0; i < s; ++i) q_plus[i] = sample_uniform_sphere(d, 1.3, rng);
  AdversaryReport rep = detail::cap_adversary_core(oracle, q_minus, q_plus, eps);
  rep.randomized = true;
  return rep;
}

/// Same attack with caller-frozen query sets; fully deterministic given
/// (oracle, Q, eps).
inline AdversaryReport cap_adversary_deterministic(CountingOracle& oracle,
                                                   const std::vector<Vec>& q_minus,
                                                   const std::vector<Vec>& q_plus, double eps) {
  if (q_minus.empty() && q_plus.empty())
    throw std::invalid_argument("cap_adversary_deterministic: empty query sets");
  return detail::cap_adversary_core(oracle, q_minus, q_plus, eps);
}

// ---------------------------------------------------------------------------
// Emulation reductions

using InnerAdversary = std::function<AdversaryReport(CountingOracle&, RngStream&)>;

struct EmulateIidResult {
  AdversaryReport report;
  std::vector<CapComponent> decoys;
  double tau = 0.0;
};

/// Runs an adversary built for Caps_k^iid(delta) against a Cap(delta/k)
/// oracle by planting k-1 decoy components. Every inner query is still
/// forwarded to the real oracle (simple accounting); the answers the inner
/// adversary sees are flipped on decoys, and the count of those
/// decoy-resolved queries is reported as free_queries since the paper treats
/// them as free.
inline EmulateIidResult emulate_iid(CountingOracle& oracle, const InnerAdversary& inner,
                                    double delta, int k, int d, RngStream& rng) {
  if (k < 1) throw std::invalid_argument("emulate_iid: k >= 1 required");
  EmulateIidResult out;
  out.tau = cap_threshold(delta / k, d);
  for (int i = 0; i < k - 1; ++i)
    out.decoys.push_back({sample_uniform_sphere(d, 1.0, rng), rng.sign()});
  const double tau = out.tau;
  const auto& decoys = out.decoys;
  long free = 0;
  auto in_decoy = [&](const Vec& x, double r) {
    for (const auto& c : decoys) {
      if (c.sign < 0) {
        if (r <= 1.15 && r > 1.15 / 1.3 && c.axis.dot(x) >= tau) return true;
      } else {
        if (r <= 1.495 && r > 1.15 && c.axis.dot(x) >= 1.3 * tau) return true;
      }
    }
    return false;
  };
  const long before = oracle.queries();
  CountingOracle doctored([&](const Vec& x) {
    const int real = oracle.classify(x);
    const double r = x.norm();
    if (in_decoy(x, r)) {
      ++free;
      return r <= 1.15 ? 1 : -1;
    }
    return real;
  });
  out.report = inner(doctored, rng);
  out.report.queries_used = oracle.queries() - before;
  out.report.free_queries = free;
  out.report.randomized = true;
  return out;
}

struct EmulateGeneralHooks {
  bool identity_M = false;
  bool identity_rotations = false;
  std::optional<std::vector<int>> forced_signs;
};

struct EmulateGeneralResult {
  AdversaryReport report;
  std::vector<int> signs;
  std::shared_ptr<Rotation> M;
  std::shared_ptr<std::vector<Rotation>> rotations;
};

/// Runs an adversary built for Caps_k^G(delta) against a Cap(delta/k) oracle.
/// Each inner query is answered by OR-ing the k error indicators obtained by
/// probing the real oracle at M(R_i(T_i(x))); the returned perturbation is the
/// uniform mixture of the conjugated transports on S_1 and the identity on
/// S_1.3. Query count is exactly k times the inner adversary's.
inline EmulateGeneralResult emulate_general(CountingOracle& oracle, const InnerAdversary& inner,
                                            const DirectionSampler& G, int k, int d, RngStream& rng,
                                            const EmulateGeneralHooks& hooks = {}) {
  if (k < 1) throw std::invalid_argument("emulate_general: k >= 1 required");
  std::vector<Vec> ys = G(rng);
  if (static_cast<int>(ys.size()) != k) throw std::invalid_argument("emulate_general: G arity mismatch");

  auto transport = [](const Vec& x) -> Vec {
    return x.norm() <= 1.15 ? Vec(1.3 * x) : Vec(x / 1.3);
  };

  std::vector<Rotation> rots;
  rots.reserve(k);
  for (int i = 0; i < k; ++i)
    rots.push_back(hooks.identity_rotations ? Rotation::identity(d)
                                            : rotation_taking(Vec::Unit(d, 0), ys[i]));
  auto M = std::make_shared<Rotation>(hooks.identity_M ? Rotation::identity(d)
                                                       : sample_haar_rotation(d, rng));
  EmulateGeneralResult out;
  out.signs.resize(k);
  for (int i = 0; i < k; ++i)
    out.signs[i] = hooks.forced_signs ? (*hooks.forced_signs)[i] : rng.sign();

  auto apply_Ti = [&](int i, const Vec& x) { return out.signs[i] < 0 ? transport(x) : x; };

  CountingOracle doctored([&](const Vec& x) {
    bool err = false;
    for (int i = 0; i < k; ++i) {
      const Vec ti = apply_Ti(i, x);
      const int a = oracle.classify(M->apply(rots[i].apply(ti)));
      err |= (a == -1 && ti.norm() > 1.15) || (a == 1 && ti.norm() <= 1.15);
    }
    if (x.norm() <= 1.15) return err ? 1 : -1;
    return err ? -1 : 1;
  });
  AdversaryReport inner_rep = inner(doctored, rng);
  if (inner_rep.perturbation.kind != Perturbation::Kind::deterministic)
    throw std::invalid_argument("emulate_general: inner perturbation must be deterministic");

  Perturbation mixture;
  mixture.kind = Perturbation::Kind::mixture;
  mixture.eps = inner_rep.perturbation.eps;
  auto p = std::make_shared<std::function<Vec(const Vec&)>>(inner_rep.perturbation.map);
  auto rots_sh = std::make_shared<std::vector<Rotation>>(std::move(rots));
  auto signs = out.signs;
  for (int i = 0; i < k; ++i) {
    mixture.components.push_back([p, M, rots_sh, signs, i, transport](const Vec& x) -> Vec {
      if (std::abs(x.norm() - 1.0) > 1e-9) return x;  // identity on S_1.3 and off-support
      Vec w = signs[i] < 0 ? transport(x) : x;
      w = M->apply((*rots_sh)[i].apply(w));
      w = (*p)(w);
      w = (*rots_sh)[i].apply_inverse(M->apply_inverse(w));
      return signs[i] < 0 ? transport(w) : w;
    });
  }
  out.report = std::move(inner_rep);
  out.report.perturbation = std::move(mixture);
  out.report.queries_used = static_cast<long>(k) * out.report.queries_used;
  out.report.randomized = true;
  out.M = M;
  out.rotations = rots_sh;
  return out;
}

// ---------------------------------------------------------------------------
// Binary-search attack on linear separators (two-intervals strip)

struct LineAttackResult {
  AdversaryReport report;
  double crossing_left = 0.0;   // recovered boundary height at x = 0
  double crossing_right = 0.0;  // recovered boundary height at x = m
  bool recovered = false;
};

/// Two bisections, one per strip edge, each on y in [0, z]. Endpoint labels
/// are assumed (-1 at y=0, +1 at y=z); only midpoints are queried, so the
/// count is exactly 2 ceil(log2(z / tol)) regardless of m. A constant oracle
/// shows up as both bisections collapsing to opposite extremes with uniform
/// answers, which is reported as failure.
inline LineAttackResult binary_search_line_attack(CountingOracle& oracle, double m, double z,
                                                  double tol, double eps) {
  if (!(tol > 0 && tol < z)) throw std::invalid_argument("binary_search_line_attack: 0 < tol < z required");
  LineAttackResult out;
  const int steps = static_cast<int>(std::ceil(std::log2(z / tol)));
  auto bisect = [&](double x, bool& all_plus, bool& all_minus) {
    double lo = 0.0, hi = z;
    all_plus = all_minus = true;
    for (int i = 0; i < steps; ++i) {
      const double mid = 0.5 * (lo + hi);
      Vec q(2);
      q[0] = x;
      q[1] = mid;
      const int a = oracle.classify(q);
      out.report.transcript.push_back({q, a});
      (a == 1 ? hi : lo) = mid;
      (a == 1 ? all_minus : all_plus) = false;
    }
    return 0.5 * (lo + hi);
  };
  bool lp, lm, rp, rm;
  out.crossing_left = bisect(0.0, lp, lm);
  out.crossing_right = bisect(m, rp, rm);
  out.report.queries_used = 2 * steps;
  if ((lp && rp) || (lm && rm)) {
    out.report.failed = true;
    out.report.perturbation = Perturbation::identity(eps);
    return out;
  }
  out.recovered = true;
  const double y0 = out.crossing_left;
  const double slope = (out.crossing_right - y0) / m;
  const double nrm = std::sqrt(1.0 + slope * slope);
  Perturbation p;
  p.eps = eps;
  p.map = [y0, slope, nrm, eps, z](const Vec& x) -> Vec {
    // push toward the side of the recovered line that disagrees with the
    // ground truth; points already on that side stay put
    const double signed_dist = (x[1] - y0 - slope * x[0]) / nrm;
    const int h = intervals_truth(x, z);
    const double dir = h < 0 ? 1.0 : -1.0;  // h = -1 wants the +1 side (above)
    if (dir * signed_dist >= 0 || std::abs(signed_dist) > eps) return x;
    Vec y = x;
    y[0] += dir * eps * (-slope / nrm);
    y[1] += dir * eps * (1.0 / nrm);
    return y;
  };
  out.report.perturbation = std::move(p);
  return out;
}

// ---------------------------------------------------------------------------
// White-box best responses (full access, no query counting)

/// Exact response against an implanted cap error set: every support point that
/// can reach a component on its own sphere takes the full geodesic step toward
/// that component's axis.
inline Perturbation whitebox_cap_response(std::shared_ptr<const CapErrorSet> e, double eps) {
  const double theta = 2.0 * std::asin(std::min(eps, 2.0) / 2.0);
  Perturbation p;
  p.eps = 1.3 * eps;
  p.map = [e, theta](const Vec& x) -> Vec {
    const double r = x.norm();
    const bool inner_sphere = std::abs(r - 1.0) < 1e-9;
    if (!inner_sphere && std::abs(r - 1.3) > 1e-9) return x;
    const double cap_angle = std::acos(std::clamp(e->tau(), -1.0, 1.0));
    const CapComponent* best = nullptr;
    double best_ang = std::numeric_limits<double>::infinity();
    for (const auto& c : e->components()) {
      if ((c.sign < 0) != inner_sphere) continue;
      const double ang = std::acos(std::clamp(c.axis.dot(x) / r, -1.0, 1.0));
      if (ang <= cap_angle + theta && ang < best_ang) {
        best_ang = ang;
        best = &c;
      }
    }
    if (best == nullptr) return x;
    const Vec xh = x / r;
    Vec t = best->axis - best->axis.dot(xh) * xh;
    const double tn = t.norm();
    if (tn < 1e-12) return x;  // already at the pole
    const double step = std::min(theta, best_ang);  // never rotate past the axis
    return r * (std::cos(step) * xh + (std::sin(step) / tn) * t);
  };
  return p;
}

/// Exact response against a known linear separator on the two-intervals task:
/// perpendicular crossing toward the side that disagrees with the ground truth.
inline Perturbation whitebox_linear_response(const LinearSeparator& sep, double z, double eps) {
  Perturbation p;
  p.eps = eps;
  p.map = [w = sep.w, b = sep.b, z, eps](const Vec& x) -> Vec {
    const double signed_dist = w.dot(x) + b;  // w is unit
    const int h = intervals_truth(x, z);
    const double target = h < 0 ? 1.0 : -1.0;  // sign of w.y + b the adversary wants
    if (target * signed_dist >= 0 || std::abs(signed_dist) > eps) return x;
    return x + target * eps * w;
  };
  return p;
}

/// Near-exact response against 1-NN on the two-intervals task. Each support
/// point scans the deep arc of its eps-disk for an actually misclassified
/// point and moves there; points that cannot reach the error set move away
/// from the midline, which is the pickup-minimizing harmless placement.
inline Perturbation whitebox_onenn_response(std::shared_ptr<const OneNNClassifier> nn, double z,
                                            double eps, int scan_points = 129) {
  Perturbation p;
  p.eps = eps;
  p.map = [nn, z, eps, scan_points](const Vec& x) -> Vec {
    const bool on_plus = std::abs(x[1] - z) < 1e-9;
    const bool on_minus = std::abs(x[1]) < 1e-9;
    if (!on_plus && !on_minus) return x;
    const int label = on_plus ? 1 : -1;
    if (nn->classify(x) != label) return x;  // already an error point
    const double toward = on_plus ? -1.0 : 1.0;
    Vec w(2);
    for (int i = 0; i < scan_points; ++i) {
      const double dx = -eps + 2.0 * eps * i / (scan_points - 1);
      const double dy = std::sqrt(std::max(eps * eps - dx * dx, 0.0)) * 0.999;
      w[0] = x[0] + dx;
      w[1] = x[1] + toward * dy;
      if (nn->classify(w) != label) return w;
    }
    w[0] = x[0];
    w[1] = x[1] - toward * eps;
    return w;
  };
  return p;
}

}  // namespace qclab
