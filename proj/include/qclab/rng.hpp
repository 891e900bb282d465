#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace qclab {

/// Deterministic counter-based random stream (splitmix64 core).
///
/// The same (seed, stream) pair always reproduces the same draw sequence,
/// independent of platform or thread scheduling. Distinct stream ids give
/// statistically independent sequences, which is what the trial harness
/// relies on: every trial owns substream(trial_index) of the master stream.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), state_(mix(seed ^ mix(stream + kGamma))) {}

  std::uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Standard normal via Box-Muller (second value cached).
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  /// Exponential with the given rate (mean 1/rate).
  double exponential(double rate = 1.0) {
    return -std::log(1.0 - uniform()) / rate;
  }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Fair +1 / -1.
  int sign() { return (next_u64() & 1u) ? 1 : -1; }

  /// Independent stream derived from this one; deterministic in (seed, stream, id).
  RngStream substream(std::uint64_t id) const {
    return RngStream(seed_, mix(stream_ ^ mix(id + kGamma)));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace qclab
