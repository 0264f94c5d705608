// Discrete-event simulation of both acquisition schemes. Nothing here calls
// the closed-form statistics: receiver locations, scan schedules, shots and
// detections are sampled directly, so the results serve as an independent
// check on the analytic expressions.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fsoacq/errors.hpp"
#include "fsoacq/numerics.hpp"
#include "fsoacq/random.hpp"
#include "fsoacq/region.hpp"
#include "fsoacq/shotgun.hpp"

namespace fsoacq::mc {

/// Whether the receiver stays put for the whole trial or is re-drawn from
/// the location law at the start of every full scan. The closed-form spiral
/// statistics treat scans as independent, which is exact only for `per_scan`.
enum class LocationMode { fixed, per_scan };

/// Reach time inside a successful subscan: T_d r^2 / rho^2 (`continuous`),
/// or T_d times the index of the first spiral waypoint covering the
/// receiver (`waypoint_walk`).
enum class ReachMode { continuous, waypoint_walk };

struct PhotonCounting {
  double signal_plus_noise_mean = 0.0;  ///< mu1 of the illuminated count
  std::int64_t threshold = 0;           ///< gamma0
};

struct McConfig {
  std::uint64_t trials = 100000;
  std::uint64_t seed = 0x5EED5EEDULL;
  bool exact_shot_geometry = false;
  bool photon_level = false;  ///< detect by Poisson draw > threshold instead of Bernoulli(p_d)
  PhotonCounting photon{};
  LocationMode location_mode = LocationMode::fixed;
  ReachMode reach_mode = ReachMode::continuous;
  std::vector<double> ccdf_taus;
  unsigned workers = 0;  ///< 0 = hardware concurrency
  bool keep_times = false;
  double max_shots = 1e9;
  double max_scans = 1e8;

  void validate() const {
    if (trials < 1) throw std::invalid_argument("McConfig: trials must be >= 1");
    if (photon_level && !(photon.signal_plus_noise_mean > 0.0 && photon.threshold >= 0)) {
      throw std::invalid_argument("McConfig: photon-level mode needs a positive mean and threshold >= 0");
    }
    for (double t : ccdf_taus) {
      if (!(t >= 0.0)) throw std::invalid_argument("McConfig: ccdf taus must be non-negative");
    }
  }
};

struct CcdfPoint {
  double tau;
  double estimate;
  double std_error;  ///< binomial standard error
};

struct McSummary {
  double empirical_mean = 0.0;
  double mean_stderr = 0.0;
  std::vector<CcdfPoint> ccdf_points;
  std::uint64_t trials_used = 0;
  std::vector<double> times;  ///< per-trial times when keep_times is set
};

struct DetectionEstimate {
  double probability;
  double std_error;
  std::uint64_t draws;
};

/// Runs `trial(index, rng)` for every trial index on a pool of threads and
/// returns the results in index order. Each trial gets its own stream.
template <class Trial>
std::vector<double> run_trials(const McConfig& cfg, Trial&& trial) {
  std::vector<double> out(cfg.trials);
  unsigned workers = cfg.workers != 0 ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::uint64_t>(workers, cfg.trials));

  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&](std::uint64_t begin, std::uint64_t end) {
    try {
      for (std::uint64_t i = begin; i < end; ++i) {
        Rng rng = Rng::stream(cfg.seed, i);
        out[i] = trial(i, rng);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };

  if (workers <= 1) {
    work(0, cfg.trials);
  } else {
    std::vector<std::thread> pool;
    const std::uint64_t chunk = (cfg.trials + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::uint64_t begin = w * chunk;
      const std::uint64_t end = std::min<std::uint64_t>(cfg.trials, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(work, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

inline McSummary summarize(std::vector<double> times, std::span<const double> taus, bool keep_times) {
  McSummary s;
  const auto n = static_cast<double>(times.size());
  s.trials_used = times.size();
  s.empirical_mean = numerics::pairwise_sum(times) / n;
  std::vector<double> sq(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double d = times[i] - s.empirical_mean;
    sq[i] = d * d;
  }
  const double var = times.size() > 1 ? numerics::pairwise_sum(sq) / (n - 1.0) : 0.0;
  s.mean_stderr = std::sqrt(var / n);
  for (double tau : taus) {
    const auto above = std::count_if(times.begin(), times.end(), [tau](double t) { return t > tau; });
    const double p = static_cast<double>(above) / n;
    s.ccdf_points.push_back({tau, p, std::sqrt(p * (1.0 - p) / n)});
  }
  if (keep_times) s.times = std::move(times);
  return s;
}

namespace detail {

// Truncated / untruncated Rayleigh radius by inversion.
inline double sample_radius(Rng& rng, const LocationModel& model) {
  const double u = rng.uniform();
  return std::sqrt(-2.0 * model.sigma * model.sigma * std::log1p(-u * model.normalizer()));
}

inline bool detect(Rng& rng, double p_d, const McConfig& cfg) {
  if (cfg.photon_level) return rng.poisson(cfg.photon.signal_plus_noise_mean) > cfg.photon.threshold;
  return rng.bernoulli(p_d);
}

// Index lookup of the first spiral waypoint that covers a receiver.
class SpiralWalk {
 public:
  SpiralWalk(const ScanGeometry& geom, std::span<const double> subregion_radii)
      : geom_(geom),
        waypoints_(spiral_waypoints(geom, geom.region_radius + 2.0 * geom.beam_radius)),
        step_(2.0 * geom.beam_radius),
        c_(step_ / (2.0 * numerics::kPi)) {
    for (double rk : subregion_radii) {
      const auto it = std::upper_bound(waypoints_.begin(), waypoints_.end(), rk,
                                       [](double v, const Waypoint& w) { return v < w.r; });
      counts_.push_back(static_cast<std::size_t>(it - waypoints_.begin()));
    }
  }

  /// Dwell positions in subscan k (1-based).
  [[nodiscard]] std::size_t count(std::size_t k) const { return counts_.at(k - 1); }

  /// First waypoint within rho sqrt(2) of (r, phi); the nearest one otherwise.
  [[nodiscard]] std::size_t first_cover(double r, double phi) const {
    const double px = r * std::cos(phi);
    const double py = r * std::sin(phi);
    const double reach2 = 2.0 * geom_.beam_radius * geom_.beam_radius;
    const double two_pi = 2.0 * numerics::kPi;
    double base = std::fmod(phi, two_pi);
    if (base < 0.0) base += two_pi;
    std::size_t first = waypoints_.size();
    std::size_t nearest = 0;
    double nearest_d2 = std::numeric_limits<double>::infinity();
    const double m_lo = std::max(0.0, std::ceil(((r - 2.0 * step_) / c_ - base) / two_pi));
    const double m_hi = std::floor(((r + 2.0 * step_) / c_ - base) / two_pi);
    for (double m = m_lo; m <= m_hi; m += 1.0) {
      const double theta = base + two_pi * m;
      const double s = fsoacq::detail::spiral_arc_length(c_, theta);
      const auto j0 = static_cast<std::int64_t>(std::llround(s / step_));
      for (std::int64_t j = j0 - 3; j <= j0 + 3; ++j) {
        if (j < 0 || j >= static_cast<std::int64_t>(waypoints_.size())) continue;
        const auto& w = waypoints_[static_cast<std::size_t>(j)];
        const double dx = w.x() - px;
        const double dy = w.y() - py;
        const double d2 = dx * dx + dy * dy;
        if (d2 <= reach2) first = std::min(first, static_cast<std::size_t>(j));
        if (d2 < nearest_d2) {
          nearest_d2 = d2;
          nearest = static_cast<std::size_t>(j);
        }
      }
    }
    return first < waypoints_.size() ? first : nearest;
  }

 private:
  ScanGeometry geom_;
  std::vector<Waypoint> waypoints_;
  std::vector<std::size_t> counts_;
  double step_;
  double c_;
};

// Probability that a N(0, sigma0^2) coordinate falls in [x - rho, x + rho].
inline double interval_mass(double x, double rho, double sigma0) {
  const double ax = std::abs(x);
  const double k = 1.0 / (sigma0 * std::sqrt(2.0));
  return 0.5 * (std::erfc((ax - rho) * k) - std::erfc((ax + rho) * k));
}

// Draw from N(0, sigma0^2) restricted to [x - rho, x + rho] by rejection
// against the uniform envelope.
inline double sample_in_interval(Rng& rng, double x, double rho, double sigma0) {
  const double peak = std::clamp(0.0, x - rho, x + rho);
  const double s2 = 2.0 * sigma0 * sigma0;
  for (;;) {
    const double u = x - rho + 2.0 * rho * rng.uniform();
    if (rng.uniform() < std::exp(-(u * u - peak * peak) / s2)) return u;
  }
}

}  // namespace detail

/// Adaptive spiral search. Per trial: draw the receiver radius, then run
/// scans of subscans k = 1..N; an illuminated receiver (r <= R_k) is detected
/// with probability p_d at the current elapsed time plus its reach time,
/// otherwise the full subscan time is spent.
inline McSummary simulate_adaptive_spiral(const Partition& partition, double p_d,
                                          const LocationModel& model, const McConfig& cfg) {
  cfg.validate();
  if (!cfg.photon_level && !(p_d > 0.0 && p_d <= 1.0)) {
    throw std::domain_error("simulate_adaptive_spiral: p_d must lie in (0, 1]");
  }
  if (!model.truncated) {
    throw std::invalid_argument(
        "simulate_adaptive_spiral: receivers outside the scanned region are never found; use the truncated model");
  }
  const ScanGeometry& geom = partition.geometry();
  const std::size_t n = partition.size();
  const double rho2 = geom.beam_radius * geom.beam_radius;
  const bool walk = cfg.reach_mode == ReachMode::waypoint_walk;
  std::optional<detail::SpiralWalk> walker;
  if (walk) walker.emplace(geom, partition.radii());

  std::vector<double> subscan(n);
  for (std::size_t k = 1; k <= n; ++k) {
    subscan[k - 1] = walk ? geom.dwell_time * static_cast<double>(walker->count(k)) : partition.subscan_time(k);
  }

  auto trial = [&](std::uint64_t, Rng& rng) {
    double r = detail::sample_radius(rng, model);
    double phi = walk ? 2.0 * numerics::kPi * rng.uniform() : 0.0;
    double elapsed = 0.0;
    for (double scan = 0.0; scan < cfg.max_scans; scan += 1.0) {
      if (scan > 0.0 && cfg.location_mode == LocationMode::per_scan) {
        r = detail::sample_radius(rng, model);
        if (walk) phi = 2.0 * numerics::kPi * rng.uniform();
      }
      for (std::size_t k = 1; k <= n; ++k) {
        if (r <= partition.radius(k) && detail::detect(rng, p_d, cfg)) {
          if (walk) {
            const std::size_t j = std::min(walker->first_cover(r, phi), walker->count(k) - 1);
            return elapsed + geom.dwell_time * static_cast<double>(j);
          }
          return elapsed + geom.dwell_time * r * r / rho2;
        }
        elapsed += subscan[k - 1];
      }
    }
    throw ConvergenceError("simulate_adaptive_spiral: runaway trial exceeded the scan limit");
  };
  return summarize(run_trials(cfg, trial), cfg.ccdf_taus, cfg.keep_times);
}

/// Shotgun search. Per trial: draw the receiver from N(0, sigma^2 I)
/// (restricted to the region when the model is truncated), then fire shots
/// until one hits and is detected; the time is shot count times T_d.
/// Approximate geometry hits with the density-times-area probability; exact
/// geometry samples shot positions and tests disk membership.
inline McSummary simulate_shotgun(const shotgun::FiringDistribution& firing, const ScanGeometry& geom,
                                  double p_d, const LocationModel& model, const McConfig& cfg) {
  cfg.validate();
  if (!(firing.sigma0 > 0.0)) throw std::domain_error("simulate_shotgun: sigma0 must be positive");
  if (!cfg.photon_level && !(p_d > 0.0 && p_d <= 1.0)) {
    throw std::domain_error("simulate_shotgun: p_d must lie in (0, 1]");
  }
  const double rho = geom.beam_radius;
  const double s0 = firing.sigma0;

  auto trial = [&](std::uint64_t, Rng& rng) {
    double x = 0.0;
    double y = 0.0;
    do {
      x = geom.sigma * rng.normal();
      y = geom.sigma * rng.normal();
    } while (model.truncated && x * x + y * y > model.region_radius * model.region_radius);

    double shots = 0.0;
    if (!cfg.exact_shot_geometry) {
      const double q = shotgun::hit_prob(x, y, rho, firing, false);
      for (;;) {
        shots += rng.geometric(q);
        if (shots > cfg.max_shots) break;
        if (detail::detect(rng, p_d, cfg)) return shots * geom.dwell_time;
      }
    } else {
      // Shots landing in the bounding square arrive geometrically; each
      // such shot is placed exactly and tested against the disk.
      const double q_box = detail::interval_mass(x, rho, s0) * detail::interval_mass(y, rho, s0);
      for (;;) {
        shots += rng.geometric(q_box);
        if (shots > cfg.max_shots) break;
        const double sx = detail::sample_in_interval(rng, x, rho, s0);
        const double sy = detail::sample_in_interval(rng, y, rho, s0);
        const double d2 = (sx - x) * (sx - x) + (sy - y) * (sy - y);
        if (d2 <= rho * rho && detail::detect(rng, p_d, cfg)) return shots * geom.dwell_time;
      }
    }
    throw ConvergenceError("simulate_shotgun: runaway trial exceeded the shot limit");
  };
  return summarize(run_trials(cfg, trial), cfg.ccdf_taus, cfg.keep_times);
}

/// Fraction of Poisson(mu) draws strictly above gamma0.
inline DetectionEstimate simulate_detection(double mu, std::int64_t gamma0, const McConfig& cfg) {
  cfg.validate();
  if (!(mu > 0.0)) throw std::domain_error("simulate_detection: mu must be positive");
  const auto hits = run_trials(cfg, [&](std::uint64_t, Rng& rng) {
    return rng.poisson(mu) > gamma0 ? 1.0 : 0.0;
  });
  const double n = static_cast<double>(cfg.trials);
  const double p = numerics::pairwise_sum(hits) / n;
  return {p, std::sqrt(p * (1.0 - p) / n), cfg.trials};
}

/// Raw per-trial times as consecutive little-endian IEEE-754 doubles.
inline void write_trial_dump(const std::string& path, std::span<const double> times) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open trial dump: " + path);
  for (double t : times) {
    const auto bits = std::bit_cast<std::uint64_t>(t);
    std::array<char, 8> bytes{};
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
    os.write(bytes.data(), bytes.size());
  }
  if (!os) throw std::runtime_error("failed writing trial dump: " + path);
}

inline std::vector<double> read_trial_dump(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open trial dump: " + path);
  std::vector<double> out;
  std::array<unsigned char, 8> bytes{};
  while (is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    out.push_back(std::bit_cast<double>(bits));
  }
  return out;
}

}  // namespace fsoacq::mc
