#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qclab/geometry.hpp"
#include "qclab/tasks.hpp"

namespace qclab {

using LabelFn = std::function<int(const Vec&)>;

class BudgetExceeded : public std::runtime_error {
 public:
  BudgetExceeded() : std::runtime_error("query budget exceeded") {}
};

/// Black-box decision oracle. Every classify() call costs one query; crossing
/// the hard budget aborts the run instead of silently continuing.
class CountingOracle {
 public:
  explicit CountingOracle(LabelFn rule, long hard_budget = -1)
      : rule_(std::move(rule)), hard_budget_(hard_budget) {}

  int classify(const Vec& x) {
    if (hard_budget_ >= 0 && queries_ >= hard_budget_) throw BudgetExceeded();
    ++queries_;
    return rule_(x);
  }

  long queries() const { return queries_; }
  long hard_budget() const { return hard_budget_; }

  /// Uncounted access, for evaluation code that is not the adversary.
  const LabelFn& rule() const { return rule_; }

 private:
  LabelFn rule_;
  long queries_ = 0;
  long hard_budget_;
};

// ---------------------------------------------------------------------------
// 1-nearest-neighbor

class OneNNClassifier {
 public:
  explicit OneNNClassifier(Dataset data) : data_(std::move(data)) {
    if (data_.samples.empty())
      throw std::invalid_argument("OneNNClassifier: empty training set");
    if (const auto* ti = std::get_if<TwoIntervalsTask>(&data_.task)) {
      z_ = ti->z;
      for (std::size_t i = 0; i < data_.samples.size(); ++i) {
        const auto& s = data_.samples[i];
        (s.point[1] == 0.0 ? line_minus_ : line_plus_).push_back({s.point[0], i});
      }
      auto by_x = [](const Entry& a, const Entry& b) {
        return a.x < b.x || (a.x == b.x && a.index < b.index);
      };
      std::sort(line_minus_.begin(), line_minus_.end(), by_x);
      std::sort(line_plus_.begin(), line_plus_.end(), by_x);
      fast_path_ = !line_minus_.empty() || !line_plus_.empty();
      // points off the two lines fall back to the scan
      for (const auto& s : data_.samples)
        if (s.point[1] != 0.0 && s.point[1] != z_) fast_path_ = false;
    }
  }

  int classify(const Vec& x) const { return data_.samples[nearest_index(x)].label; }

  /// Index of the nearest training point; ties broken by lowest sample index.
  std::size_t nearest_index(const Vec& x) const {
    if (fast_path_ && x.size() == 2) return nearest_index_2d(x[0], x[1]);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < data_.samples.size(); ++i) {
      const double d2 = (data_.samples[i].point - x).squaredNorm();
      if (d2 < best) {
        best = d2;
        best_i = i;
      }
    }
    return best_i;
  }

  const Dataset& data() const { return data_; }

  LabelFn as_label_fn() const {
    auto self = std::make_shared<OneNNClassifier>(*this);
    return [self](const Vec& x) { return self->classify(x); };
  }

 private:
  struct Entry {
    double x;
    std::size_t index;
  };

  std::size_t nearest_index_2d(double px, double py) const {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    bool have = false;
    auto consider = [&](const std::vector<Entry>& line, double ly) {
      if (line.empty()) return;
      const double dy2 = (py - ly) * (py - ly);
      auto it = std::lower_bound(line.begin(), line.end(), px,
                                 [](const Entry& e, double v) { return e.x < v; });
      auto probe = [&](std::vector<Entry>::const_iterator p) {
        const double dx = p->x - px;
        const double d2 = dx * dx + dy2;
        if (!have || d2 < best || (d2 == best && p->index < best_i)) {
          best = d2;
          best_i = p->index;
          have = true;
        }
      };
      // equal x-distances can hide several candidates; probe a small window
      for (int off = 0; off < 2; ++off) {
        if (it + off < line.end()) probe(it + off);
        if (it - 1 - off >= line.begin()) probe(it - 1 - off);
      }
    };
    consider(line_minus_, 0.0);
    consider(line_plus_, z_);
    return best_i;
  }

  Dataset data_;
  std::vector<Entry> line_minus_, line_plus_;
  double z_ = 0.0;
  bool fast_path_ = false;
};

// ---------------------------------------------------------------------------
// Ellipsoid classifier (the trained-network surrogate on concentric spheres)

class EllipsoidClassifier {
 public:
  EllipsoidClassifier(Rotation rotation, Vec axis_weights)
      : rotation_(std::move(rotation)), weights_(std::move(axis_weights)) {
    for (int i = 0; i < weights_.size(); ++i)
      if (!(weights_[i] > 0)) throw std::invalid_argument("EllipsoidClassifier: weights must be positive");
  }

  /// -1 iff the quadratic form is <= 1 (closed inner region).
  int classify(const Vec& x) const {
    const Vec q = rotation_.apply(x);
    double s = 0.0;
    for (int i = 0; i < q.size(); ++i) s += weights_[i] * q[i] * q[i];
    return s <= 1.0 ? -1 : 1;
  }

  LabelFn as_label_fn() const {
    auto self = std::make_shared<EllipsoidClassifier>(*this);
    return [self](const Vec& x) { return self->classify(x); };
  }

 private:
  Rotation rotation_;
  Vec weights_;
};

// ---------------------------------------------------------------------------
// Cap error sets on the concentric-spheres geometry

/// One randomly oriented component of a cap error set. The inner shape is
/// cap(axis, 1.15, tau) \ B_{1.15/1.3}; the outer shape is its 1.3-scaling
/// cap(axis, 1.495, 1.3 tau) \ B_{1.15}.
struct CapComponent {
  Vec axis;
  int sign;  // -1: inner shape, +1: outer shape
};

class CapErrorSet {
 public:
  CapErrorSet(double delta, int k, double tau, std::vector<CapComponent> comps)
      : delta_(delta), k_(k), tau_(tau), comps_(std::move(comps)) {}

  bool contains(const Vec& x) const {
    const double r = x.norm();
    for (const auto& c : comps_)
      if (component_contains(c, x, r)) return true;
    return false;
  }

  bool component_contains(const CapComponent& c, const Vec& x, double r) const {
    if (c.sign < 0)
      return r <= 1.15 && r > 1.15 / 1.3 && c.axis.dot(x) >= tau_;
    return r <= 1.495 && r > 1.15 && c.axis.dot(x) >= 1.3 * tau_;
  }

  /// Exact Euclidean distance from x to a component (annulus sector geometry,
  /// reduced to the 2D plane spanned by x and the axis).
  double component_distance(const CapComponent& c, const Vec& x) const {
    const double r = x.norm();
    const double a = c.axis.dot(x);
    const double b = std::sqrt(std::max(r * r - a * a, 0.0));
    double rlo, rhi, t;
    if (c.sign < 0) {
      rlo = 1.15 / 1.3;
      rhi = 1.15;
      t = tau_;
    } else {
      rlo = 1.15;
      rhi = 1.495;
      t = 1.3 * tau_;
    }
    if (a >= t && r >= rlo && r <= rhi) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](double p, double q) {
      best = std::min(best, std::hypot(a - p, b - q));
    };
    for (double rr : {rlo, rhi}) {
      if (r > 0) {
        double p = a * rr / r, q = b * rr / r;
        if (p < t) {
          p = t;
          q = std::sqrt(std::max(rr * rr - t * t, 0.0));
        }
        consider(p, q);
      } else {
        consider(t, std::sqrt(std::max(rr * rr - t * t, 0.0)));
      }
    }
    const double qlo = std::sqrt(std::max(rlo * rlo - t * t, 0.0));
    const double qhi = std::sqrt(std::max(rhi * rhi - t * t, 0.0));
    consider(t, std::clamp(b, qlo, qhi));
    return best;
  }

  /// Distance from x to the whole error set.
  double distance(const Vec& x) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : comps_) best = std::min(best, component_distance(c, x));
    return best;
  }

  /// Membership in the eps-dilation (error set + B_eps).
  bool dilated_contains(const Vec& x, double eps) const { return distance(x) <= eps; }

  /// On-sphere reachability for a support point x: can a geodesic step of
  /// angle theta enter a component living on x's sphere?
  bool reachable_on_sphere(const Vec& x, double theta) const {
    const double r = x.norm();
    const bool inner_sphere = std::abs(r - 1.0) < 1e-9;
    const double cap_angle = std::acos(std::clamp(tau_, -1.0, 1.0));
    for (const auto& c : comps_) {
      if ((c.sign < 0) != inner_sphere) continue;
      const double ang = std::acos(std::clamp(c.axis.dot(x) / r, -1.0, 1.0));
      if (ang <= cap_angle + theta) return true;
    }
    return false;
  }

  double delta() const { return delta_; }
  int k() const { return k_; }
  double tau() const { return tau_; }
  const std::vector<CapComponent>& components() const { return comps_; }

 private:
  double delta_;
  int k_;
  double tau_;
  std::vector<CapComponent> comps_;
};

enum class CapsVariant { iid, from_G };

/// Sampler over S_1^{d-1})^k used by the Caps_k^G distribution.
using DirectionSampler = std::function<std::vector<Vec>(RngStream&)>;

/// Draws an error set from Cap / Caps_k^iid / Caps_k^G. The iid variant uses
/// independent uniform axes; from_G rotates the G-draw by a common Haar matrix.
inline CapErrorSet sample_cap_error(int d, double delta, int k, CapsVariant variant, RngStream& rng,
                                    const DirectionSampler* G = nullptr) {
  if (k < 1) throw std::invalid_argument("sample_cap_error: k >= 1 required");
  if (!(delta > 0 && delta < 1)) throw std::invalid_argument("sample_cap_error: delta in (0,1) required");
  const double tau = cap_threshold(delta / k, d);
  std::vector<CapComponent> comps;
  comps.reserve(k);
  if (variant == CapsVariant::iid) {
    for (int i = 0; i < k; ++i)
      comps.push_back({sample_uniform_sphere(d, 1.0, rng), rng.sign()});
  } else {
    if (G == nullptr) throw std::invalid_argument("sample_cap_error: from_G requires a direction sampler");
    std::vector<Vec> ys = (*G)(rng);
    if (static_cast<int>(ys.size()) != k)
      throw std::invalid_argument("sample_cap_error: G arity mismatch");
    Rotation M = sample_haar_rotation(d, rng);
    for (int i = 0; i < k; ++i) comps.push_back({M.apply(ys[i]).normalized(), rng.sign()});
  }
  return CapErrorSet(delta, k, tau, std::move(comps));
}

/// Classifier equal to the ground truth everywhere except on E, where it is
/// flipped; its error set is exactly E.
inline LabelFn implant_classifier(GroundTruth truth, std::function<bool(const Vec&)> error_set) {
  return [truth, error_set = std::move(error_set)](const Vec& x) {
    const int h = truth(x);
    return error_set(x) ? -h : h;
  };
}

inline LabelFn implant_classifier(GroundTruth truth, std::shared_ptr<const CapErrorSet> e) {
  return [truth, e = std::move(e)](const Vec& x) {
    const int h = truth(x);
    return e->contains(x) ? -h : h;
  };
}

// ---------------------------------------------------------------------------
// Linear separators

struct LinearSeparator {
  Vec w;     // unit normal
  double b;  // offset
  int classify(const Vec& x) const { return w.dot(x) + b >= 0 ? 1 : -1; }
  LabelFn as_label_fn() const {
    return [w = w, b = b](const Vec& x) { return w.dot(x) + b >= 0 ? 1 : -1; };
  }
};

class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

/// Zero-training-error linear separator via a perceptron with random init and
/// random presentation order. Deliberately not max-margin: the SVM line on the
/// two-intervals task sits exactly on the midline and kills the adversarial
/// risk, which degenerates the experiments downstream.
inline LinearSeparator train_linear_erm(const Dataset& data, RngStream& rng, int max_epochs = 5000) {
  if (data.samples.empty()) throw TrainingError("train_linear_erm: empty dataset");
  const int d = static_cast<int>(data.samples[0].point.size());
  // per-coordinate affine normalization keeps the perceptron's mistake bound
  // independent of the raw coordinate ranges
  Vec center = Vec::Zero(d), scale = Vec::Zero(d);
  for (const auto& s : data.samples) center += s.point;
  center /= static_cast<double>(data.samples.size());
  for (const auto& s : data.samples)
    scale = scale.cwiseMax((s.point - center).cwiseAbs());
  for (int i = 0; i < d; ++i) scale[i] = std::max(scale[i], 1e-12);
  auto feature = [&](const Vec& x, int i) { return (x[i] - center[i]) / scale[i]; };
  Vec v(d + 1);
  for (int i = 0; i <= d; ++i) v[i] = rng.normal();
  std::vector<std::size_t> order(data.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    bool clean = true;
    for (std::size_t idx : order) {
      const auto& s = data.samples[idx];
      double margin = v[d];
      for (int i = 0; i < d; ++i) margin += v[i] * feature(s.point, i);
      if ((margin >= 0 ? 1 : -1) != s.label) {
        clean = false;
        for (int i = 0; i < d; ++i) v[i] += s.label * feature(s.point, i);
        v[d] += s.label;
      }
    }
    if (clean) {
      Vec w(d);
      double b = v[d];
      for (int i = 0; i < d; ++i) {
        w[i] = v[i] / scale[i];
        b -= v[i] * center[i] / scale[i];
      }
      const double n = w.norm();
      if (n == 0.0) continue;
      return {w / n, b / n};
    }
  }
  throw TrainingError("train_linear_erm: no separator found (non-separable data?)");
}

}  // namespace qclab
