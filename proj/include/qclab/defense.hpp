#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "qclab/classifiers.hpp"
#include "qclab/geometry.hpp"

namespace qclab {

/// Randomly shifted grid partition over an existing classifier: the label of x
/// is the base label at the center of x's shifted cell, memoized per cell. The
/// shift is the defense's entropy source and is drawn once at wrap time.
class SmoothedClassifier {
 public:
  SmoothedClassifier(LabelFn base, double cell_side, Vec shift)
      : base_(std::move(base)), cell_(cell_side), shift_(std::move(shift)),
        cache_(std::make_shared<Cache>()) {
    if (!(cell_ > 0)) throw std::invalid_argument("SmoothedClassifier: cell side > 0 required");
  }

  std::vector<std::int64_t> cell_index(const Vec& x) const {
    std::vector<std::int64_t> idx(x.size());
    for (int i = 0; i < x.size(); ++i)
      idx[i] = static_cast<std::int64_t>(std::floor((x[i] - shift_[i]) / cell_));
    return idx;
  }

  Vec cell_center(const std::vector<std::int64_t>& idx) const {
    Vec c(static_cast<int>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
      c[static_cast<int>(i)] = shift_[static_cast<int>(i)] + (idx[i] + 0.5) * cell_;
    return c;
  }

  int classify(const Vec& x) const {
    const auto idx = cell_index(x);
    {
      std::lock_guard<std::mutex> lock(cache_->mu);
      auto it = cache_->labels.find(idx);
      if (it != cache_->labels.end()) return it->second;
    }
    // duplicate computation is allowed; divergent answers are not (base is a
    // fixed deterministic rule, so recomputation always matches)
    const int label = base_(cell_center(idx));
    std::lock_guard<std::mutex> lock(cache_->mu);
    cache_->labels.emplace(idx, label);
    return label;
  }

  LabelFn as_label_fn() const {
    auto self = std::make_shared<SmoothedClassifier>(*this);
    return [self](const Vec& x) { return self->classify(x); };
  }

  double cell_side() const { return cell_; }
  const Vec& shift() const { return shift_; }
  std::size_t cached_cells() const {
    std::lock_guard<std::mutex> lock(cache_->mu);
    return cache_->labels.size();
  }

 private:
  struct IndexHash {
    std::size_t operator()(const std::vector<std::int64_t>& v) const {
      std::size_t h = 1469598103934665603ull;
      for (auto x : v) {
        h ^= static_cast<std::size_t>(x) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      }
      return h;
    }
  };
  struct Cache {
    std::mutex mu;
    std::unordered_map<std::vector<std::int64_t>, int, IndexHash> labels;
  };

  LabelFn base_;
  double cell_;
  Vec shift_;
  std::shared_ptr<Cache> cache_;  // copies of the classifier share the memo table
};

/// Wraps a base rule in the grid defense with cell side eps_defense and a
/// fresh uniform shift in [0, eps_defense)^d.
inline SmoothedClassifier defense_wrap(LabelFn base, double eps_defense, int d, RngStream& rng) {
  if (!(eps_defense > 0)) throw std::invalid_argument("defense_wrap: eps_defense > 0 required");
  Vec shift(d);
  for (int i = 0; i < d; ++i) shift[i] = rng.uniform(0.0, eps_defense);
  return SmoothedClassifier(std::move(base), eps_defense, std::move(shift));
}

/// Monte Carlo estimate, over n independent shift draws, of the probability
/// that x and x' land in differently labeled cells of the defense family.
inline Estimate flip_probability(const LabelFn& base, double cell_side, const Vec& x,
                                 const Vec& x_prime, int n, RngStream& rng) {
  if (n < 1) throw std::invalid_argument("flip_probability: n >= 1 required");
  const int d = static_cast<int>(x.size());
  long flips = 0;
  for (int i = 0; i < n; ++i) {
    SmoothedClassifier g = defense_wrap(base, cell_side, d, rng);
    if (g.classify(x) != g.classify(x_prime)) ++flips;
  }
  const double p = static_cast<double>(flips) / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

}  // namespace qclab
