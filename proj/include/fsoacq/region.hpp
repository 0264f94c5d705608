// Uncertainty-region geometry: Rayleigh radial location model, subregion
// partition bookkeeping, spiral scan timing and waypoints.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsoacq/numerics.hpp"

namespace fsoacq {

struct ScanGeometry {
  double beam_radius = 0.2;     ///< rho, m
  double dwell_time = 1e-4;     ///< T_d, s
  double sigma = 15.0;          ///< per-axis location std-dev, m
  double region_radius = 50.0;  ///< radius of the uncertainty region, m

  void validate() const {
    if (!(beam_radius > 0.0) || !(beam_radius < region_radius)) {
      throw std::domain_error("ScanGeometry: need 0 < beam_radius < region_radius");
    }
    if (!(dwell_time > 0.0)) throw std::domain_error("ScanGeometry: dwell_time must be positive");
    if (!(sigma > 0.0)) throw std::domain_error("ScanGeometry: sigma must be positive");
  }
};

/// Radial location law: Rayleigh with scale sigma, optionally conditioned on
/// the receiver lying inside the uncertainty region.
struct LocationModel {
  double sigma = 15.0;
  double region_radius = 50.0;
  bool truncated = true;

  static LocationModel from(const ScanGeometry& g, bool truncated = true) {
    return LocationModel{g.sigma, g.region_radius, truncated};
  }

  /// Probability mass of the full region under this model (1 when truncated).
  [[nodiscard]] double region_mass() const {
    return truncated ? 1.0 : -std::expm1(-region_radius * region_radius / (2.0 * sigma * sigma));
  }

  /// Normalizer applied to the untruncated Rayleigh law.
  [[nodiscard]] double normalizer() const {
    return truncated ? -std::expm1(-region_radius * region_radius / (2.0 * sigma * sigma)) : 1.0;
  }
};

inline double rayleigh_cdf(double r, const LocationModel& model) {
  if (!(r >= 0.0)) throw std::domain_error("rayleigh_cdf: r must be non-negative");
  if (model.truncated && r >= model.region_radius) return 1.0;
  return -std::expm1(-r * r / (2.0 * model.sigma * model.sigma)) / model.normalizer();
}

inline double rayleigh_pdf(double r, const LocationModel& model) {
  if (!(r >= 0.0)) throw std::domain_error("rayleigh_pdf: r must be non-negative");
  if (model.truncated && r > model.region_radius) return 0.0;
  const double s2 = model.sigma * model.sigma;
  return r / s2 * std::exp(-r * r / (2.0 * s2)) / model.normalizer();
}

/// Mass of the annulus (r_in, r_out]; differences taken on the survival
/// function so small rings keep their relative precision.
inline double rayleigh_ring_mass(double r_in, double r_out, const LocationModel& model) {
  const double s2 = 2.0 * model.sigma * model.sigma;
  if (model.truncated) {
    r_in = std::min(r_in, model.region_radius);
    r_out = std::min(r_out, model.region_radius);
  }
  return (std::exp(-r_in * r_in / s2) - std::exp(-r_out * r_out / s2)) / model.normalizer();
}

/// Time to spiral-scan a disk of the given radius: T_d radius^2 / rho^2.
inline double scan_time(double radius, const ScanGeometry& geom) {
  if (!(radius >= 0.0) || radius > geom.region_radius * (1.0 + 1e-12)) {
    throw std::domain_error("scan_time: radius outside [0, region_radius]");
  }
  return geom.dwell_time * radius * radius / (geom.beam_radius * geom.beam_radius);
}

/// Ordered subregion radii R_1 < ... < R_N = R with the derived scan
/// quantities used by the adaptive spiral statistics. Indices follow the
/// usual convention: radius(0) = 0, beta(0) = 0, eta(k) for k = 1..N.
class Partition {
 public:
  Partition(std::vector<double> radii, const ScanGeometry& geom) : geom_(geom) {
    geom_.validate();
    if (radii.empty()) throw std::invalid_argument("Partition: need at least one radius");
    const double R = geom_.region_radius;
    if (std::abs(radii.back() - R) > 1e-12 * R) {
      throw std::invalid_argument("Partition: last radius must equal the region radius");
    }
    radii.back() = R;
    radii_.reserve(radii.size() + 1);
    radii_.push_back(0.0);
    for (double r : radii) {
      if (!(r > radii_.back())) {
        throw std::invalid_argument("Partition: radii must be strictly increasing and positive");
      }
      radii_.push_back(r);
    }
    const double rho2 = geom_.beam_radius * geom_.beam_radius;
    alpha_ = rho2 / (2.0 * geom_.dwell_time * geom_.sigma * geom_.sigma);
    cum_sq_.assign(radii_.size(), 0.0);
    beta_.assign(radii_.size(), 0.0);
    eta_.assign(radii_.size(), 0.0);
    numerics::CompensatedSum acc;
    for (std::size_t k = 1; k < radii_.size(); ++k) {
      acc.add(radii_[k] * radii_[k]);
      cum_sq_[k] = acc.value();
      beta_[k] = geom_.dwell_time * cum_sq_[k] / rho2;
      eta_[k] = -std::expm1(-alpha_ * scan_time(radii_[k], geom_));
    }
  }

  /// N subregions with radii k R / N.
  static Partition uniform(std::size_t n, const ScanGeometry& geom) {
    if (n == 0) throw std::invalid_argument("Partition::uniform: n must be positive");
    std::vector<double> r(n);
    for (std::size_t k = 0; k < n; ++k) {
      r[k] = geom.region_radius * static_cast<double>(k + 1) / static_cast<double>(n);
    }
    r.back() = geom.region_radius;
    return Partition(std::move(r), geom);
  }

  /// Inner radii R_1..R_{N-1} followed by the region radius.
  static Partition from_inner(std::span<const double> inner, const ScanGeometry& geom) {
    std::vector<double> r(inner.begin(), inner.end());
    r.push_back(geom.region_radius);
    return Partition(std::move(r), geom);
  }

  [[nodiscard]] std::size_t size() const noexcept { return radii_.size() - 1; }
  [[nodiscard]] const ScanGeometry& geometry() const noexcept { return geom_; }
  [[nodiscard]] double radius(std::size_t k) const { return radii_.at(k); }
  /// R_1..R_N (without the leading zero).
  [[nodiscard]] std::span<const double> radii() const noexcept {
    return std::span<const double>(radii_).subspan(1);
  }
  [[nodiscard]] double cumulative_sq(std::size_t k) const { return cum_sq_.at(k); }
  [[nodiscard]] double beta(std::size_t k) const { return beta_.at(k); }
  [[nodiscard]] double eta(std::size_t k) const {
    if (k == 0) throw std::out_of_range("Partition::eta: k starts at 1");
    return eta_.at(k);
  }
  [[nodiscard]] double alpha() const noexcept { return alpha_; }
  /// Duration of one full scan, beta_N.
  [[nodiscard]] double scan_period() const noexcept { return beta_.back(); }
  /// Duration of subscan k (k = 1..N).
  [[nodiscard]] double subscan_time(std::size_t k) const { return scan_time(radius(k), geom_); }

 private:
  ScanGeometry geom_;
  std::vector<double> radii_;
  std::vector<double> cum_sq_;
  std::vector<double> beta_;
  std::vector<double> eta_;
  double alpha_ = 0.0;
};

struct Waypoint {
  double r;      ///< r_s, m
  double theta;  ///< theta_s, rad
  [[nodiscard]] double x() const { return r * std::cos(theta); }
  [[nodiscard]] double y() const { return r * std::sin(theta); }
};

namespace detail {
// Arc length of r = c theta from 0 to theta.
inline double spiral_arc_length(double c, double theta) {
  return 0.5 * c * (theta * std::sqrt(1.0 + theta * theta) + std::asinh(theta));
}
}  // namespace detail

/// Archimedean spiral r_s = (b / 2 pi) theta_s with pitch b = 2 rho, sampled
/// at arc-length steps of 2 rho from the centre out to `out_radius`.
inline std::vector<Waypoint> spiral_waypoints(const ScanGeometry& geom, double out_radius) {
  if (!(out_radius > 0.0)) throw std::domain_error("spiral_waypoints: out_radius must be positive");
  const double step = 2.0 * geom.beam_radius;
  const double c = step / (2.0 * numerics::kPi);
  std::vector<Waypoint> out;
  out.reserve(static_cast<std::size_t>(numerics::kPi * out_radius * out_radius / (step * step) * 1.05) + 8);
  out.push_back({0.0, 0.0});
  double theta = 0.0;
  for (std::size_t j = 1;; ++j) {
    const double target = step * static_cast<double>(j);
    // Newton on s(theta) = target; ds/dtheta = c sqrt(1 + theta^2).
    double t = theta + step / (c * std::sqrt(1.0 + theta * theta));
    for (int it = 0; it < 50; ++it) {
      const double f = detail::spiral_arc_length(c, t) - target;
      const double dt = f / (c * std::sqrt(1.0 + t * t));
      t -= dt;
      if (std::abs(dt) <= 1e-14 * std::max(1.0, t)) break;
    }
    theta = t;
    const double r = c * theta;
    if (r > out_radius) break;
    out.push_back({r, theta});
  }
  return out;
}

/// Posterior radial density of the receiver given no detection during the
/// first k-1 subscans, under the truncated location model. With r in ring i
/// (R_{i-1} < r <= R_i, i < k) the receiver has been missed k-i times.
inline double conditional_location_pdf(double r, std::size_t k, const Partition& partition,
                                       double p_d) {
  if (k < 1 || k > partition.size()) throw std::domain_error("conditional_location_pdf: k outside [1, N]");
  if (!(p_d >= 0.0 && p_d <= 1.0)) throw std::domain_error("conditional_location_pdf: p_d outside [0, 1]");
  if (!(r >= 0.0)) throw std::domain_error("conditional_location_pdf: r must be non-negative");
  const auto model = LocationModel::from(partition.geometry(), true);
  const double miss = 1.0 - p_d;
  double norm = rayleigh_ring_mass(partition.radius(k - 1), partition.geometry().region_radius, model);
  for (std::size_t i = 1; i < k; ++i) {
    norm += std::pow(miss, static_cast<double>(k - i)) *
            rayleigh_ring_mass(partition.radius(i - 1), partition.radius(i), model);
  }
  double weight = 1.0;
  for (std::size_t i = 1; i < k; ++i) {
    if (r <= partition.radius(i)) {
      weight = std::pow(miss, static_cast<double>(k - i));
      break;
    }
  }
  return weight * rayleigh_pdf(r, model) / norm;
}

/// Reach-time density within a successful subscan k: exponential with rate
/// alpha truncated to [0, T_d R_k^2 / rho^2].
inline double truncated_exp_pdf(double x, std::size_t k, const Partition& partition) {
  if (k < 1 || k > partition.size()) throw std::domain_error("truncated_exp_pdf: k outside [1, N]");
  const double upper = partition.subscan_time(k);
  if (x < 0.0 || x > upper) return 0.0;
  const double a = partition.alpha();
  return a * std::exp(-a * x) / partition.eta(k);
}

}  // namespace fsoacq
