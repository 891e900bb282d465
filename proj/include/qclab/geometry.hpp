#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <stdexcept>
#include <variant>
#include <vector>

#include "qclab/rng.hpp"

namespace qclab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Point of radius r on S_r^{d-1}, uniform. Degenerate all-zero draws are redrawn.
inline Vec sample_uniform_sphere(int d, double r, RngStream& rng) {
  if (d < 1) throw std::invalid_argument("sample_uniform_sphere: d >= 1 required");
  if (r <= 0) throw std::invalid_argument("sample_uniform_sphere: r > 0 required");
  Vec x(d);
  double n = 0.0;
  do {
    for (int i = 0; i < d; ++i) x[i] = rng.normal();
    n = x.norm();
  } while (n == 0.0);
  return (r / n) * x;
}

/// Solid cap: B_r intersected with the half-space <x, axis> >= tau.
struct SphericalCap {
  Vec axis;       // unit vector
  double radius;  // r > 0
  double tau;     // inner-product cut, 0 <= tau <= r

  bool contains(const Vec& x) const {
    return x.norm() <= radius && axis.dot(x) >= tau;
  }
};

inline bool in_cap(const Vec& x, const SphericalCap& cap) { return cap.contains(x); }

namespace detail {
// Surface fraction of the unit sphere with first coordinate >= tau, tau in [-1, 1].
// Evaluated through the complement I_{tau^2}(1/2, (d-1)/2), which keeps the
// incomplete-beta argument small where the caps of interest live.
inline double cap_fraction_signed(double tau, int d) {
  if (tau >= 1.0) return 0.0;
  if (tau <= -1.0) return 1.0;
  if (tau == 0.0) return 0.5;
  const double t = std::abs(tau);
  const double frac = 0.5 * boost::math::ibetac(0.5, (d - 1) / 2.0, t * t);
  return tau > 0 ? frac : 1.0 - frac;
}
}  // namespace detail

/// Fraction of the unit sphere's surface inside cap(axis, 1, tau).
inline double cap_fraction(double tau, int d) {
  if (d < 2) throw std::domain_error("cap_fraction: d >= 2 required");
  if (tau < 0.0 || tau > 1.0) throw std::domain_error("cap_fraction: tau in [0, 1] required");
  return detail::cap_fraction_signed(tau, d);
}

enum class CapModel { exact, gaussian };

/// Threshold tau(delta): cap_fraction(tau, d) == delta. The exact model bisects
/// the incomplete-beta cap fraction; the gaussian model returns q/sqrt(d) where
/// q is the standard-normal upper-delta quantile bisected against erfc.
inline double cap_threshold(double delta, int d, CapModel model = CapModel::exact) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("cap_threshold: delta in (0, 1) required");
  if (d < 2) throw std::domain_error("cap_threshold: d >= 2 required");
  if (delta == 0.5) return 0.0;  // hemisphere
  if (model == CapModel::exact) {
    double lo = -1.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (detail::cap_fraction_signed(mid, d) > delta) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }
  // gaussian model: P[N(0,1) >= q] = erfc(q / sqrt(2)) / 2 = delta
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(mid / std::sqrt(2.0)) > delta) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi) / std::sqrt(static_cast<double>(d));
}

struct GaussianTailBounds {
  double lower;
  double upper;
};

/// Sandwich on P[X >= t] for standard normal X; lower bound positive only for t > 1.
inline GaussianTailBounds gaussian_tail_bounds(double t) {
  const double c = 0.3989422804014326779399461;  // 1/sqrt(2 pi)
  const double e = std::exp(-0.5 * t * t);
  return {c * (1.0 / t - 1.0 / (t * t * t)) * e, c * (1.0 / t) * e};
}

/// Exact standard-normal upper tail, used as the erfc oracle next to the bounds.
inline double gaussian_tail(double t) { return 0.5 * std::erfc(t / std::sqrt(2.0)); }

/// Orthogonal map with O(d) application hooks. Dense matrices are materialized
/// only below kDenseRotationLimit; above that the Haar sampler keeps the
/// factored Householder form and applies it on demand.
class Rotation {
 public:
  static constexpr int kDenseRotationLimit = 2000;

  static Rotation identity(int d) { return Rotation(IdentityImpl{d}); }

  static Rotation dense(Mat m) { return Rotation(DenseImpl{std::move(m)}); }

  /// R * from == to, composed from at most two Householder reflections.
  static Rotation taking(const Vec& from, const Vec& to) {
    const int d = static_cast<int>(from.size());
    if (to.size() != d) throw std::invalid_argument("rotation_taking: dimension mismatch");
    Vec f = from.normalized();
    Vec t = to.normalized();
    if ((f - t).norm() < 1e-14) return identity(d);
    PairImpl impl;
    impl.d = d;
    impl.u1 = (f - t).normalized();
    Vec w = f - f.dot(t) * t;
    if (w.norm() < 1e-9) {
      // antipodal: pick the coordinate direction least aligned with t
      int best = 0;
      for (int i = 1; i < d; ++i)
        if (std::abs(t[i]) < std::abs(t[best])) best = i;
      w = Vec::Unit(d, best);
      w -= w.dot(t) * t;
    }
    impl.u2 = w.normalized();
    return Rotation(std::move(impl));
  }

  Vec apply(const Vec& v) const {
    return std::visit([&](const auto& impl) { return impl.apply(v); }, impl_);
  }

  Vec apply_inverse(const Vec& v) const {
    return std::visit([&](const auto& impl) { return impl.apply_inverse(v); }, impl_);
  }

  int dim() const {
    return std::visit([](const auto& impl) { return impl.dim(); }, impl_);
  }

  /// Materialized matrix; intended for small d (tests, diagnostics).
  Mat matrix() const {
    const int d = dim();
    Mat m(d, d);
    for (int j = 0; j < d; ++j) m.col(j) = apply(Vec::Unit(d, j));
    return m;
  }

 private:
  struct IdentityImpl {
    int d;
    Vec apply(const Vec& v) const { return v; }
    Vec apply_inverse(const Vec& v) const { return v; }
    int dim() const { return d; }
  };

  struct DenseImpl {
    Mat m;
    Vec apply(const Vec& v) const { return m * v; }
    Vec apply_inverse(const Vec& v) const { return m.transpose() * v; }
    int dim() const { return static_cast<int>(m.rows()); }
  };

  struct PairImpl {
    int d = 0;
    Vec u1, u2;  // R = H(u2) o H(u1)
    static Vec reflect(const Vec& v, const Vec& u) { return v - 2.0 * u.dot(v) * u; }
    Vec apply(const Vec& v) const { return reflect(reflect(v, u1), u2); }
    Vec apply_inverse(const Vec& v) const { return reflect(reflect(v, u2), u1); }
    int dim() const { return d; }
  };

  struct QrImpl {
    // Q from the factored QR of a Gaussian matrix, sign-corrected so the
    // implied R has positive diagonal (that makes Q Haar on O(d)).
    Eigen::HouseholderQR<Mat> qr;
    Vec signs;
    Vec apply(const Vec& v) const {
      Vec w = signs.asDiagonal() * v;
      w.applyOnTheLeft(qr.householderQ());
      return w;
    }
    Vec apply_inverse(const Vec& v) const {
      Vec w = v;
      w.applyOnTheLeft(qr.householderQ().transpose());
      return signs.asDiagonal() * w;
    }
    int dim() const { return static_cast<int>(signs.size()); }
  };

  using Impl = std::variant<IdentityImpl, DenseImpl, PairImpl, QrImpl>;

  explicit Rotation(Impl impl) : impl_(std::move(impl)) {}

  Impl impl_;

  friend Rotation sample_haar_rotation(int, RngStream&, int);
};

/// Haar-distributed element of O(d) via QR of a Gaussian matrix.
/// dense_limit exists so tests can force the factored path at small d.
inline Rotation sample_haar_rotation(int d, RngStream& rng,
                                     int dense_limit = Rotation::kDenseRotationLimit) {
  if (d < 1) throw std::invalid_argument("sample_haar_rotation: d >= 1 required");
  if (d == 1) {
    Mat m(1, 1);
    m(0, 0) = rng.sign();
    return Rotation::dense(std::move(m));
  }
  Mat g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Vec signs(d);
  const Mat& qrm = qr.matrixQR();
  for (int i = 0; i < d; ++i) signs[i] = qrm(i, i) >= 0 ? 1.0 : -1.0;
  if (d <= dense_limit) {
    Mat q = qr.householderQ();
    q = q * signs.asDiagonal();
    return Rotation::dense(std::move(q));
  }
  Rotation::QrImpl impl{std::move(qr), std::move(signs)};
  return Rotation(Rotation::Impl(std::move(impl)));
}

inline Rotation rotation_taking(const Vec& from, const Vec& to) {
  return Rotation::taking(from, to);
}

}  // namespace qclab
