// Photon-counting hypothesis test: threshold selection for a false-alarm
// target and the resulting detection / false-alarm probabilities.
//
// The receiver declares "present" when the Poisson photon count Z strictly
// exceeds an integer threshold gamma0. Under H0 the count mean is
// lambda_n*A*T; under H1 it is (P_s/(pi rho^2) + lambda_n)*A*T.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "fsoacq/errors.hpp"
#include "fsoacq/numerics.hpp"

namespace fsoacq {

struct ChannelParams {
  double signal_power = 0.0;     ///< P_s; beam intensity is P_s / (pi rho^2)
  double noise_intensity = 0.0;  ///< lambda_n, photons / m^2 / s
  double detector_area = 0.0;    ///< A, m^2
  double obs_interval = 0.0;     ///< T, s

  void validate() const {
    if (!(signal_power > 0.0) || !(noise_intensity > 0.0) ||
        !(detector_area > 0.0) || !(obs_interval > 0.0)) {
      throw std::domain_error("ChannelParams: all fields must be strictly positive");
    }
  }

  /// Mean count under H0.
  [[nodiscard]] double noise_mean() const {
    return noise_intensity * detector_area * obs_interval;
  }

  /// Mean count under H1 for beam radius `rho`.
  [[nodiscard]] double signal_plus_noise_mean(double rho) const {
    if (!(rho > 0.0)) throw std::domain_error("beam radius must be positive");
    return (signal_power / (numerics::kPi * rho * rho) + noise_intensity) *
           detector_area * obs_interval;
  }

  /// Channel whose counts at beam radius `rho` are `signal_count` signal
  /// photons and `noise_count` noise photons (A = 1 m^2, T = 1 s).
  static ChannelParams from_counts(double signal_count, double noise_count,
                                   double rho) {
    ChannelParams p{signal_count * numerics::kPi * rho * rho, noise_count, 1.0, 1.0};
    p.validate();
    return p;
  }
};

struct DetectorConfig {
  std::int64_t count_threshold = 0;  ///< gamma0: decide H1 iff Z > gamma0
  double p_fa_target = 0.0;
};

namespace detail {

inline constexpr int kGammaMaxIter = 100000;

// Lower regularized gamma P(a, x) by its power series; best for x < a + 1.
inline double gamma_p_series(double a, double x) {
  if (x == 0.0) return 0.0;
  numerics::CompensatedSum sum;
  double term = 1.0;
  sum.add(term);
  for (int n = 1; n < kGammaMaxIter; ++n) {
    term *= x / (a + n);
    sum.add(term);
    if (term < sum.value() * std::numeric_limits<double>::epsilon() * 0.25) {
      const double log_prefix = a * std::log(x) - x - std::lgamma(a + 1.0);
      return std::exp(log_prefix + std::log(sum.value()));
    }
  }
  throw ConvergenceError("incomplete gamma series did not converge");
}

// Upper regularized gamma Q(a, x) by modified Lentz continued fraction;
// best for x >= a + 1.
inline double gamma_q_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kGammaMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) {
      const double log_prefix = a * std::log(x) - x - std::lgamma(a);
      return std::exp(log_prefix + std::log(h));
    }
  }
  throw ConvergenceError("incomplete gamma continued fraction did not converge");
}

inline void check_gamma_domain(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0) || std::isinf(a)) {
    throw std::domain_error("regularized gamma requires a > 0 and x >= 0");
  }
}

}  // namespace detail

/// Lower regularized incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
inline double regularized_gamma_p(double a, double x) {
  detail::check_gamma_domain(a, x);
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_continued_fraction(a, x);
}

/// Upper regularized incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
/// For integer a = k + 1 this is P(Z <= k) with Z ~ Poisson(x).
inline double regularized_gamma_q(double a, double x) {
  detail::check_gamma_domain(a, x);
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
  return detail::gamma_q_continued_fraction(a, x);
}

/// P(Z > k) for Z ~ Poisson(mu). Small tails keep full relative precision.
inline double poisson_tail(std::int64_t k, double mu) {
  if (k < 0) throw std::domain_error("poisson_tail: k must be non-negative");
  if (!(mu > 0.0)) throw std::domain_error("poisson_tail: mu must be positive");
  return regularized_gamma_p(static_cast<double>(k) + 1.0, mu);
}

/// Smallest integer threshold whose false-alarm probability at noise mean
/// `mu0` does not exceed `p_fa_target`.
inline DetectorConfig threshold_for_pfa(double mu0, double p_fa_target) {
  if (!(mu0 > 0.0)) throw std::domain_error("threshold_for_pfa: mu0 must be positive");
  if (!(p_fa_target > 0.0 && p_fa_target < 1.0)) {
    throw std::domain_error("threshold_for_pfa: target must lie in (0, 1)");
  }
  // The tail is non-increasing in k: bracket by doubling, then bisect.
  std::int64_t lo = -1;  // tail(lo) > target (k = -1 stands for P(Z > -1) = 1)
  std::int64_t hi = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(mu0)));
  while (poisson_tail(hi, mu0) > p_fa_target) {
    lo = hi;
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (mid >= 0 && poisson_tail(mid, mu0) <= p_fa_target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return DetectorConfig{hi, p_fa_target};
}

inline double prob_false_alarm(double mu0, const DetectorConfig& cfg) {
  return poisson_tail(cfg.count_threshold, mu0);
}

inline double prob_detection(const ChannelParams& params, double rho,
                             const DetectorConfig& cfg) {
  params.validate();
  return poisson_tail(cfg.count_threshold, params.signal_plus_noise_mean(rho));
}

}  // namespace fsoacq
