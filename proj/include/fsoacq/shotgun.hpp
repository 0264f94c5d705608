// Randomized ("shotgun") acquisition: pulses are fired at points drawn from a
// zero-mean circular Gaussian of std-dev sigma0. For a receiver at (x, y) a
// shot succeeds with probability p_D(x, y) = P(hit | x, y) P_D, so the shot
// count is geometric and E[T | x, y] = T_d / p_D(x, y).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>

#include "fsoacq/errors.hpp"
#include "fsoacq/numerics.hpp"
#include "fsoacq/region.hpp"

namespace fsoacq::shotgun {

struct FiringDistribution {
  double sigma0 = 0.0;  ///< std-dev per axis of the aim-point law, m
};

namespace detail {

inline void check_pd(double p_d) {
  if (!(p_d > 0.0 && p_d <= 1.0)) throw std::domain_error("shotgun: p_d must lie in (0, 1]");
}

inline void check_sigma0(double sigma0) {
  if (!(sigma0 > 0.0)) throw std::domain_error("shotgun: sigma0 must be positive");
}

}  // namespace detail

/// Probability that one shot lands within `rho` of the receiver at (x, y).
/// The approximate form is the firing density at (x, y) times pi rho^2; the
/// exact form integrates the firing density over the disk in polar
/// coordinates about the receiver.
inline double hit_prob(double x, double y, double rho, const FiringDistribution& firing,
                       bool exact = false) {
  if (!(rho > 0.0)) throw std::domain_error("hit_prob: rho must be positive");
  detail::check_sigma0(firing.sigma0);
  const double s2 = firing.sigma0 * firing.sigma0;
  if (!exact) {
    return std::min(1.0, rho * rho / (2.0 * s2) * std::exp(-(x * x + y * y) / (2.0 * s2)));
  }
  // Angular direction: periodic trapezoid (spectrally accurate);
  // radial direction: Gauss-Legendre.
  constexpr int kAngles = 64;
  auto ring = [&](double s) {
    double acc = 0.0;
    for (int j = 0; j < kAngles; ++j) {
      const double th = 2.0 * numerics::kPi * j / kAngles;
      const double px = x + s * std::cos(th);
      const double py = y + s * std::sin(th);
      acc += std::exp(-(px * px + py * py) / (2.0 * s2));
    }
    return acc * (2.0 * numerics::kPi / kAngles) * s;
  };
  const double v = boost::math::quadrature::gauss<double, 30>::integrate(ring, 0.0, rho);
  return std::clamp(v / (2.0 * numerics::kPi * s2), 0.0, 1.0);
}

/// Closed-form mean acquisition time, 2 T_d sigma0^4 / (rho^2 P_D (sigma0^2 - sigma^2)).
inline double mean_acq_time(double sigma0, const ScanGeometry& geom, double p_d) {
  detail::check_sigma0(sigma0);
  detail::check_pd(p_d);
  if (!(sigma0 > geom.sigma * (1.0 + 1e-9))) {
    throw DivergenceError("shotgun mean time diverges for sigma0 <= sigma");
  }
  const double s02 = sigma0 * sigma0;
  const double rho2 = geom.beam_radius * geom.beam_radius;
  return 2.0 * geom.dwell_time * s02 * s02 / (rho2 * p_d * (s02 - geom.sigma * geom.sigma));
}

/// Log of the approximate hit probability, finite even where the
/// probability itself underflows.
inline double log_hit_prob(double x, double y, double rho, const FiringDistribution& firing) {
  const double s2 = firing.sigma0 * firing.sigma0;
  return std::min(0.0, std::log(rho * rho / (2.0 * s2)) - (x * x + y * y) / (2.0 * s2));
}

namespace detail {

// Integral over the disk of radius `extent` of g(x, y) in polar coordinates
// (radius outer, angle inner), both by adaptive Gauss-Kronrod.
template <class G>
double plane_integral(G g, double extent, double rel_tol) {
  return numerics::integrate(
      [&](double r) {
        const double ring = numerics::integrate(
            [&](double th) { return g(r * std::cos(th), r * std::sin(th)); }, 0.0, 2.0 * numerics::kPi, rel_tol, 6);
        return r * ring;
      },
      0.0, extent, rel_tol, 12);
}

}  // namespace detail

/// Mean time by 2-D quadrature of T_d / p_D(x, y) against the receiver's
/// Gaussian location density.
inline double mean_acq_time_quadrature(double sigma0, const ScanGeometry& geom, double p_d) {
  detail::check_sigma0(sigma0);
  detail::check_pd(p_d);
  if (!(sigma0 > geom.sigma)) throw DivergenceError("shotgun mean time integral diverges for sigma0 <= sigma");
  const FiringDistribution firing{sigma0};
  const double s2 = geom.sigma * geom.sigma;
  auto integrand = [&](double x, double y) {
    // T_d / (p_hit P_D) times the location density, combined in log space.
    const double log_v = std::log(geom.dwell_time / p_d) - log_hit_prob(x, y, geom.beam_radius, firing) -
                         (x * x + y * y) / (2.0 * s2);
    return std::exp(log_v) / (2.0 * numerics::kPi * s2);
  };
  const double s_eff = 1.0 / std::sqrt(1.0 / s2 - 1.0 / (sigma0 * sigma0));
  return detail::plane_integral(integrand, 40.0 * s_eff, 1e-12);
}

/// Minimizer of the mean time over sigma0.
inline double optimal_sigma0_mean(double sigma) {
  if (!(sigma > 0.0)) throw std::domain_error("optimal_sigma0_mean: sigma must be positive");
  return std::sqrt(2.0) * sigma;
}

/// Number of shots fired strictly before time tau: max(0, floor(tau / T_d)).
inline std::int64_t shots_before(double tau, double dwell_time) {
  // Relative slack absorbs representation error such as 80 / 1e-4.
  const double n = std::floor(tau / dwell_time * (1.0 + 1e-12));
  return std::max<std::int64_t>(0, static_cast<std::int64_t>(n));
}

struct CcdfSeries {
  double value = 1.0;
  std::int64_t shots = 0;   ///< n
  std::size_t terms = 0;    ///< terms summed (n0 + 1)
};

inline constexpr std::size_t kMaxSeriesTerms = 10000;
/// Largest tolerated rounding error from the biggest alternating term.
inline constexpr double kMaxSeriesRoundoff = 1e-7;

/// P(T > tau) from the alternating binomial series
///   sum_k C(n,k) (-P_D rho^2 / 2)^k sigma0^{-2(k-1)} / (sigma0^2 + k sigma^2),
/// truncated once three consecutive terms fall below tol * |partial sum|.
inline CcdfSeries ccdf_series(double tau, double sigma0, const ScanGeometry& geom, double p_d,
                              double tol = 1e-12) {
  if (!(tau >= 0.0)) throw std::domain_error("shotgun ccdf: tau must be non-negative");
  if (!(tol > 0.0 && tol <= 1e-6)) throw std::domain_error("shotgun ccdf: tol must lie in (0, 1e-6]");
  detail::check_sigma0(sigma0);
  detail::check_pd(p_d);
  const std::int64_t n = shots_before(tau, geom.dwell_time);
  const double s02 = sigma0 * sigma0;
  const double s2 = geom.sigma * geom.sigma;
  const double log_c = std::log(p_d * geom.beam_radius * geom.beam_radius / (2.0 * s02));

  // log |C(n,k) c^k| accumulated term by term; avoids the cancellation of
  // lgamma(n+1) - lgamma(k+1) - lgamma(n-k+1) at n ~ 1e6.
  numerics::CompensatedSum sum;
  sum.add(1.0);
  double log_mag = 0.0;
  double peak = 1.0;
  int small_run = 0;
  std::size_t k = 1;
  for (; k <= static_cast<std::size_t>(n); ++k) {
    if (k > kMaxSeriesTerms) {
      throw ConvergenceError("shotgun ccdf series needs more than 1e4 terms; rho << sigma0 regime violated");
    }
    const double kd = static_cast<double>(k);
    log_mag += std::log((static_cast<double>(n) - kd + 1.0) / kd) + log_c;
    const double mag = std::exp(log_mag) * s02 / (s02 + kd * s2);
    peak = std::max(peak, mag);
    sum.add((k % 2 == 1) ? -mag : mag);
    if (mag < tol * std::abs(sum.value())) {
      if (++small_run == 3) {
        ++k;
        break;
      }
    } else {
      small_run = 0;
    }
  }
  if (peak * std::numeric_limits<double>::epsilon() > kMaxSeriesRoundoff) {
    throw ConvergenceError("shotgun ccdf series loses precision to cancellation; use ccdf_quadrature");
  }
  return CcdfSeries{std::clamp(sum.value(), 0.0, 1.0), n, k};
}

inline double ccdf(double tau, double sigma0, const ScanGeometry& geom, double p_d,
                   double tol = 1e-12) {
  return ccdf_series(tau, sigma0, geom, p_d, tol).value;
}

/// P(T > tau) by 2-D quadrature of (1 - p_D(x, y))^n against the receiver's
/// Gaussian location density.
inline double ccdf_quadrature(double tau, double sigma0, const ScanGeometry& geom, double p_d) {
  if (!(tau >= 0.0)) throw std::domain_error("shotgun ccdf: tau must be non-negative");
  detail::check_sigma0(sigma0);
  detail::check_pd(p_d);
  const double n = static_cast<double>(shots_before(tau, geom.dwell_time));
  const FiringDistribution firing{sigma0};
  const double s2 = geom.sigma * geom.sigma;
  auto integrand = [&](double x, double y) {
    const double pd_xy = hit_prob(x, y, geom.beam_radius, firing) * p_d;
    return std::exp(n * std::log1p(-pd_xy) - (x * x + y * y) / (2.0 * s2)) / (2.0 * numerics::kPi * s2);
  };
  return detail::plane_integral(integrand, 40.0 * geom.sigma, 1e-12);
}

struct Sigma0Optimum {
  double sigma0 = 0.0;
  double objective = 0.0;
  bool flat = false;  ///< objective varies by < 1e-12 over the bracket
};

/// Numeric minimizer of P(T > tau) over sigma0 in (sigma (1 + 1e-6), 10 sigma]
/// (or a caller-supplied bracket) by golden-section search.
inline Sigma0Optimum optimal_sigma0_ccdf(double tau, const ScanGeometry& geom, double p_d,
                                         double lo = 0.0, double hi = 0.0) {
  if (!(tau > 0.0)) throw std::domain_error("optimal_sigma0_ccdf: tau must be positive");
  if (lo <= 0.0) lo = geom.sigma * (1.0 + 1e-6);
  if (hi <= 0.0) hi = 10.0 * geom.sigma;
  if (!(hi > lo)) throw std::domain_error("optimal_sigma0_ccdf: empty bracket");
  auto f = [&](double s0) { return ccdf(tau, s0, geom, p_d); };
  const auto best = numerics::golden_section_minimize(f, lo, hi, 1e-4 * geom.sigma);
  const double f_lo = f(lo);
  const double f_hi = f(hi);
  const double spread = std::max({f_lo, f_hi, best.fx}) - std::min({f_lo, f_hi, best.fx});
  return Sigma0Optimum{best.x, best.fx, spread < 1e-12};
}

}  // namespace fsoacq::shotgun
