// Counter-addressable random streams. Every (seed, a, b) triple names an
// independent xoshiro256** stream, so work split across threads draws the
// same variates no matter which thread runs it. Distribution samplers are
// written out here rather than taken from <random> so results do not depend
// on the standard library implementation.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "fsoacq/numerics.hpp"

namespace fsoacq {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) : state_(state) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& s : s_) s = sm.next();
  }

  /// Stream addressed by (seed, a, b), e.g. (master seed, trial index, 0).
  static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    SplitMix64 h(seed);
    std::uint64_t key = h.next();
    key ^= SplitMix64(a ^ 0xD1B54A32D192ED03ULL).next();
    key = SplitMix64(key).next();
    key ^= SplitMix64(b ^ 0x8CB92BA72F3D8DD7ULL).next();
    return Rng(key);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    // Box-Muller, one variate per call.
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * numerics::kPi * u2);
  }

  /// Number of Bernoulli(p) trials up to and including the first success.
  double geometric(double p) {
    if (p >= 1.0) return 1.0;
    if (!(p > 0.0)) return std::numeric_limits<double>::infinity();
    return std::floor(std::log(uniform_pos()) / std::log1p(-p)) + 1.0;
  }

  /// Poisson(mu) by sequential inversion; mu up to ~700 before exp underflows.
  std::int64_t poisson(double mu) {
    if (mu > 700.0) {
      // Split into independent halves (sum of Poissons is Poisson).
      return poisson(mu / 2.0) + poisson(mu / 2.0);
    }
    const double u = uniform();
    double p = std::exp(-mu);
    double cdf = p;
    std::int64_t k = 0;
    while (u >= cdf) {
      ++k;
      p *= mu / static_cast<double>(k);
      const double next = cdf + p;
      if (next == cdf) break;
      cdf = next;
    }
    return k;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

}  // namespace fsoacq
