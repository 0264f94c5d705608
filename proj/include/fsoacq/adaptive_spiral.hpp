// Closed-form acquisition-time statistics of the N-subregion adaptive spiral
// search.
//
// One scan consists of subscans k = 1..N; subscan k spirals out from the
// centre to radius R_k and lasts T_d R_k^2 / rho^2. The receiver is detected
// with probability p_d each time it is illuminated. The total time is
// T = W + V' where W = U beta_N counts failed full scans (U geometric with
// failure probability p) and V' is the time spent in the successful scan.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fsoacq/errors.hpp"
#include "fsoacq/region.hpp"

namespace fsoacq::spiral {

/// How the subscan event probabilities treat past misses.
enum class EventModel {
  /// Location law unchanged by earlier misses (small-P_D approximation).
  prior_invariant,
  /// Ring masses taken from the exact posterior given k-1 misses.
  conditioned,
};

struct SpiralEventProbs {
  std::vector<double> e;    ///< P(E_k), k = 1..N stored at index k-1
  double p_fail = 0.0;      ///< p = P(F), failure of one full scan
  bool degenerate = false;  ///< some annulus carries no probability mass
};

/// A Dirac atom of a mixed distribution.
struct Atom {
  double location;
  double mass;
};

inline SpiralEventProbs event_probs(const Partition& partition, double p_d,
                                    const LocationModel& model,
                                    EventModel kind = EventModel::prior_invariant) {
  if (!(p_d > 0.0 && p_d <= 1.0)) throw std::domain_error("event_probs: p_d must lie in (0, 1]");
  const std::size_t n = partition.size();
  const double miss = 1.0 - p_d;

  SpiralEventProbs out;
  std::vector<double> ring(n);
  for (std::size_t i = 1; i <= n; ++i) {
    ring[i - 1] = rayleigh_ring_mass(partition.radius(i - 1), partition.radius(i), model);
    if (!(ring[i - 1] > 0.0)) out.degenerate = true;
  }

  out.e.assign(n, 0.0);
  for (std::size_t k = 1; k <= n; ++k) {
    numerics::CompensatedSum acc;
    for (std::size_t i = 1; i <= k; ++i) {
      double mass = ring[i - 1];
      if (kind == EventModel::conditioned && k > 1) {
        const double lo = partition.radius(i - 1);
        const double hi = partition.radius(i);
        mass = numerics::integrate(
            [&](double r) { return conditional_location_pdf(r, k, partition, p_d); }, lo, hi, 1e-12);
      }
      acc.add(mass * std::pow(miss, static_cast<double>(k - i)) * p_d);
    }
    out.e[k - 1] = acc.value();
  }

  numerics::CompensatedSum pf;
  for (std::size_t k = 0; k < n; ++k) {
    pf.add(ring[k] * std::pow(miss, static_cast<double>(n - k)));
  }
  out.p_fail = pf.value();
  return out;
}

/// Acquisition-time law T = W + V' for a fixed partition and event
/// probabilities. Immutable; all queries are const.
class AcquisitionTime {
 public:
  AcquisitionTime(Partition partition, SpiralEventProbs probs)
      : partition_(std::move(partition)), probs_(std::move(probs)) {
    if (probs_.e.size() != partition_.size()) {
      throw std::invalid_argument("AcquisitionTime: probability vector does not match partition");
    }
    const double p = probs_.p_fail;
    if (p <= 0.0) {
      scan_cutoff_ = 0;
    } else if (p < 1.0) {
      scan_cutoff_ = static_cast<std::size_t>(std::ceil(std::log(1e-14) / std::log(p)));
    } else {
      scan_cutoff_ = std::numeric_limits<std::size_t>::max();
    }
  }

  [[nodiscard]] const Partition& partition() const noexcept { return partition_; }
  [[nodiscard]] const SpiralEventProbs& probs() const noexcept { return probs_; }
  /// Number of failed scans i_max after which the geometric tail mass is below 1e-14.
  [[nodiscard]] std::size_t scan_cutoff() const noexcept { return scan_cutoff_; }

  [[nodiscard]] double mean() const {
    const double p = probs_.p_fail;
    if (!(p < 1.0)) throw DivergenceError("mean acquisition time diverges: scan failure probability is 1");
    const double a = partition_.alpha();
    const double bn = partition_.scan_period();
    numerics::CompensatedSum acc;
    for (std::size_t k = 0; k < partition_.size(); ++k) {
      const double bk = partition_.beta(k);
      const double bk1 = partition_.beta(k + 1);
      const double decay = std::exp(-a * (bk1 - bk));
      const double one_minus = -std::expm1(-a * (bk1 - bk));
      const double repeat = bn * one_minus * p / ((1.0 - p) * (1.0 - p));
      const double within = (bk - bk1 * decay + one_minus / a) / (1.0 - p);
      acc.add(probs_.e[k] / partition_.eta(k + 1) * (repeat + within));
    }
    return acc.value();
  }

  /// P(T > tau), summing the finitely many in-scan terms directly.
  [[nodiscard]] double ccdf(double tau) const { return ccdf_impl(tau, false); }

  /// P(T > tau) through the geometric-series closed form in L_k.
  [[nodiscard]] double ccdf_closed_form(double tau) const { return ccdf_impl(tau, true); }

  /// Density f_T(t) (no atoms; T is continuous).
  [[nodiscard]] double density(double t) const {
    if (!(t >= 0.0)) return 0.0;
    const double bn = partition_.scan_period();
    const double scans = std::floor(t / bn);
    if (scans > static_cast<double>(scan_cutoff_)) return 0.0;
    const double u = t - scans * bn;
    const double p = probs_.p_fail;
    const double weight = scans == 0.0 ? 1.0 : std::pow(p, scans);
    return weight * in_scan_density(u);
  }

  /// Continuous part of f_V, the time spent in a single scan.
  [[nodiscard]] double density_v(double v) const {
    if (!(v >= 0.0) || v >= partition_.scan_period()) return 0.0;
    return in_scan_density(v);
  }

  /// f_V atom: a failed scan always lasts beta_N.
  [[nodiscard]] std::vector<Atom> atoms_v() const {
    return {Atom{partition_.scan_period(), probs_.p_fail}};
  }

  /// f_{V'}: single-scan time conditioned on success in that scan.
  [[nodiscard]] double density_v_prime(double v) const {
    return density_v(v) / (1.0 - probs_.p_fail);
  }

  /// f_W atom i: exactly i failed scans before the successful one.
  [[nodiscard]] Atom mass_w(std::size_t i) const {
    const double p = probs_.p_fail;
    return Atom{static_cast<double>(i) * partition_.scan_period(),
                (1.0 - p) * std::pow(p, static_cast<double>(i))};
  }

  /// f_Y atoms: time wasted in unsuccessful subscans of the final scan.
  [[nodiscard]] std::vector<Atom> atoms_y() const {
    std::vector<Atom> out;
    for (std::size_t k = 0; k < partition_.size(); ++k) {
      out.push_back({partition_.beta(k), probs_.e[k]});
    }
    out.push_back({partition_.scan_period(), probs_.p_fail});
    return out;
  }

 private:
  // Density of the successful-scan part at offset u in [0, beta_N).
  [[nodiscard]] double in_scan_density(double u) const {
    const std::size_t n = partition_.size();
    std::size_t k = 0;
    while (k + 1 < n && u >= partition_.beta(k + 1)) ++k;
    const double a = partition_.alpha();
    return probs_.e[k] * a / partition_.eta(k + 1) * std::exp(-a * (u - partition_.beta(k)));
  }

  [[nodiscard]] double ccdf_impl(double tau, bool closed_form) const {
    if (!(tau >= 0.0)) throw std::domain_error("ccdf: tau must be non-negative");
    if (tau == 0.0) return 1.0;  // T > 0 almost surely
    const double p = probs_.p_fail;
    const double a = partition_.alpha();
    const double bn = partition_.scan_period();
    const double log_p = p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
    auto p_pow = [&](double i) { return i == 0.0 ? 1.0 : std::exp(i * log_p); };

    numerics::CompensatedSum total;
    for (std::size_t k = 0; k < partition_.size(); ++k) {
      const double bk = partition_.beta(k);
      const double bk1 = partition_.beta(k + 1);
      const double eta = partition_.eta(k + 1);
      const double last = std::floor((tau - bk) / bn);                   // upper limit of the in-piece scans
      const double first = std::max(0.0, std::floor((tau - bk1) / bn) + 1.0);
      const double after = std::max(0.0, last + 1.0);                    // scans still ahead of tau
      const double count = std::max(0.0, last - first + 1.0);            // L_k

      double term = p_pow(after) / (1.0 - p);
      if (count > 0.0) {
        if (!closed_form && count <= 64.0) {
          for (double i = first; i <= last; i += 1.0) {
            // tau - i beta_N - beta_k lies in [0, beta_{k+1} - beta_k): bounded exponent.
            term += p_pow(i) * (std::exp(-a * (tau - i * bn - bk)) - std::exp(-a * (bk1 - bk))) / eta;
          }
        } else {
          // x = p e^{alpha beta_N} may exceed 1; keep powers in log space.
          const double log_x = log_p + a * bn;
          const double lead = std::exp(first * log_p - a * (tau - bk - first * bn));
          term += lead * geometric_ratio(log_x, count) / eta;
          term -= std::exp(-a * (bk1 - bk)) * p_pow(first) * geometric_ratio(log_p, count) / eta;
        }
      }
      total.add(probs_.e[k] * term);
    }
    return std::clamp(total.value(), 0.0, 1.0);
  }

  // (1 - x^L) / (1 - x) with x = exp(log_x).
  static double geometric_ratio(double log_x, double count) {
    if (std::isinf(log_x)) return 1.0;  // x = 0
    if (std::abs(log_x) < 1e-12) return count;
    return std::expm1(count * log_x) / std::expm1(log_x);
  }

  Partition partition_;
  SpiralEventProbs probs_;
  std::size_t scan_cutoff_ = 0;
};

inline double mean_acq_time(const Partition& partition, const SpiralEventProbs& probs) {
  return AcquisitionTime(partition, probs).mean();
}

inline double ccdf(double tau, const Partition& partition, const SpiralEventProbs& probs) {
  return AcquisitionTime(partition, probs).ccdf(tau);
}

}  // namespace fsoacq::spiral
