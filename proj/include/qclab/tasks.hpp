#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qclab/geometry.hpp"
#include "qclab/rng.hpp"

namespace qclab {

/// Two parallel length-m segments at vertical distance z; lower line is class -1.
struct TwoIntervalsTask {
  double m;
  double z;
};

/// Radius-1 sphere (label -1) and radius-1.3 sphere (label +1), mixed evenly;
/// the ground truth thresholds at radius 1.15.
struct ConcentricSpheresTask {
  int d;
  static constexpr double inner_radius = 1.0;
  static constexpr double outer_radius = 1.3;
  static constexpr double decision_radius = 1.15;
};

using Task = std::variant<TwoIntervalsTask, ConcentricSpheresTask>;

inline int task_dim(const Task& task) {
  if (std::holds_alternative<TwoIntervalsTask>(task)) return 2;
  return std::get<ConcentricSpheresTask>(task).d;
}

/// Ground truth for the spheres task: -1 iff inside the decision ball.
inline int cs_truth(const Vec& x) {
  return x.norm() <= ConcentricSpheresTask::decision_radius ? -1 : 1;
}

/// Ground truth for the intervals task, extended off-support by the midline rule.
inline int intervals_truth(const Vec& x, double z) { return x[1] < 0.5 * z ? -1 : 1; }

struct GroundTruth {
  Task task;
  int operator()(const Vec& x) const {
    if (const auto* ti = std::get_if<TwoIntervalsTask>(&task)) return intervals_truth(x, ti->z);
    return cs_truth(x);
  }
};

struct LabeledSample {
  Vec point;
  int label;
};

struct Dataset {
  Task task;
  std::vector<LabeledSample> samples;
};

/// The paper's boundary-extension points: nearest Poisson process points just
/// outside [0, m) on each side of each line. Flagged, not part of the dataset.
struct IntervalExtensions {
  double minus_left, minus_right;
  double plus_left, plus_right;
};

struct PoissonIntervalsSample {
  Dataset data;
  IntervalExtensions extensions;
};

namespace detail {
inline Vec point2(double x, double y) {
  Vec p(2);
  p[0] = x;
  p[1] = y;
  return p;
}
}  // namespace detail

/// Rate-1 homogeneous Poisson process on each line restricted to [0, m),
/// plus the four extension points outside the window.
inline PoissonIntervalsSample sample_two_intervals_poisson(double m, double z, RngStream& rng) {
  if (m <= 0 || z <= 0) throw std::invalid_argument("sample_two_intervals_poisson: m, z > 0 required");
  PoissonIntervalsSample out;
  out.data.task = TwoIntervalsTask{m, z};
  auto run_line = [&](double y, int label, double& left, double& right) {
    left = -rng.exponential();
    double x = 0.0;
    while (true) {
      x += rng.exponential();
      if (x >= m) break;
      out.data.samples.push_back({detail::point2(x, y), label});
    }
    right = x;
  };
  run_line(0.0, -1, out.extensions.minus_left, out.extensions.minus_right);
  run_line(z, +1, out.extensions.plus_left, out.extensions.plus_right);
  return out;
}

/// n points i.i.d. uniform on the union of the two lines, labeled by line.
inline Dataset sample_two_intervals_iid(int n, double m, double z, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("sample_two_intervals_iid: n >= 1 required");
  Dataset out;
  out.task = TwoIntervalsTask{m, z};
  out.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int label = rng.sign();
    out.samples.push_back({detail::point2(rng.uniform(0.0, m), label < 0 ? 0.0 : z), label});
  }
  return out;
}

inline Dataset sample_concentric_spheres(int d, int n, RngStream& rng) {
  if (d < 2 || n < 1) throw std::invalid_argument("sample_concentric_spheres: d >= 2, n >= 1 required");
  Dataset out;
  out.task = ConcentricSpheresTask{d};
  out.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int b = rng.sign();
    const double r = b < 0 ? ConcentricSpheresTask::inner_radius : ConcentricSpheresTask::outer_radius;
    out.samples.push_back({sample_uniform_sphere(d, r, rng), b});
  }
  return out;
}

/// One draw from the task distribution (point and true label).
inline LabeledSample sample_from_task(const Task& task, RngStream& rng) {
  if (const auto* ti = std::get_if<TwoIntervalsTask>(&task)) {
    const int label = rng.sign();
    return {detail::point2(rng.uniform(0.0, ti->m), label < 0 ? 0.0 : ti->z), label};
  }
  const auto& cs = std::get<ConcentricSpheresTask>(task);
  const int b = rng.sign();
  const double r = b < 0 ? cs.inner_radius : cs.outer_radius;
  return {sample_uniform_sphere(cs.d, r, rng), b};
}

struct Estimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

/// Unbiased Monte Carlo estimate of mu(A) for a membership predicate A.
inline Estimate measure_of_set(const Task& task, const std::function<bool(const Vec&)>& member,
                               int n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("measure_of_set: n >= 1 required");
  long hits = 0;
  for (int i = 0; i < n; ++i)
    if (member(sample_from_task(task, rng).point)) ++hits;
  const double p = static_cast<double>(hits) / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

// ---------------------------------------------------------------------------
// Dataset CSV: header "x0,...,x{d-1},label", floats with 17 significant digits.

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  const int d = task_dim(ds.task);
  for (int i = 0; i < d; ++i) os << "x" << i << ",";
  os << "label\n";
  for (const auto& s : ds.samples) {
    for (int i = 0; i < d; ++i) os << format_double(s.point[i]) << ",";
    os << s.label << "\n";
  }
}

inline void write_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  write_dataset_csv(os, ds);
}

/// Reads a dataset CSV produced by write_dataset_csv. The task tag is not part
/// of the format; the caller supplies it.
inline Dataset read_dataset_csv(std::istream& is, const Task& task) {
  Dataset out;
  out.task = task;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset csv: missing header");
  int d = 0;
  {
    std::stringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col == "label") break;
      ++d;
    }
  }
  if (d != task_dim(task)) throw std::runtime_error("dataset csv: dimension mismatch");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    Vec p(d);
    for (int i = 0; i < d; ++i) {
      if (!std::getline(ls, cell, ',')) throw std::runtime_error("dataset csv: short row");
      p[i] = std::stod(cell);
    }
    if (!std::getline(ls, cell, ',')) throw std::runtime_error("dataset csv: missing label");
    out.samples.push_back({std::move(p), std::stoi(cell)});
  }
  return out;
}

inline Dataset read_dataset_csv(const std::string& path, const Task& task) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_dataset_csv(is, task);
}

}  // namespace qclab
