// Genetic search over the inner subregion radii R_1 < ... < R_{N-1} of the
// adaptive spiral, minimizing either the mean acquisition time or P(T > tau).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsoacq/adaptive_spiral.hpp"
#include "fsoacq/random.hpp"
#include "fsoacq/region.hpp"

namespace fsoacq::ga {

enum class Objective { mean, ccdf };

struct ObjectiveSpec {
  Objective kind = Objective::mean;
  double tau = 80.0;  ///< used by Objective::ccdf
};

struct GaConfig {
  std::size_t population = 100;
  std::size_t generations = 200;
  std::size_t tournament = 3;
  double crossover_rate = 0.9;
  double blx_alpha = 0.5;
  double mutation_rate = 0.1;
  double mutation_scale = 0.05;  ///< fraction of the region radius
  std::size_t elites = 2;
  std::size_t stall_generations = 30;
  std::uint64_t seed = 0x6A5EEDULL;

  void validate() const {
    if (population < 2) throw std::invalid_argument("GaConfig: population must be >= 2");
    if (generations < 1) throw std::invalid_argument("GaConfig: generations must be >= 1");
    if (tournament < 1 || tournament > population) {
      throw std::invalid_argument("GaConfig: tournament size must lie in [1, population]");
    }
    if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) {
      throw std::invalid_argument("GaConfig: crossover_rate must lie in [0, 1]");
    }
    if (!(blx_alpha >= 0.0)) throw std::invalid_argument("GaConfig: blx_alpha must be non-negative");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) {
      throw std::invalid_argument("GaConfig: mutation_rate must lie in [0, 1]");
    }
    if (!(mutation_scale > 0.0)) throw std::invalid_argument("GaConfig: mutation_scale must be positive");
    if (elites >= population) throw std::invalid_argument("GaConfig: elites must be < population");
    if (stall_generations < 1) throw std::invalid_argument("GaConfig: stall_generations must be >= 1");
  }
};

struct GenerationStats {
  std::size_t generation;
  double best;
  double mean;
  double worst;
};

struct OptimizationResult {
  Partition partition;
  double objective_value;
  std::vector<GenerationStats> history;
  std::size_t evaluations = 0;
  std::string stop_reason;
  GaConfig config;
};

/// Minimum spacing enforced between neighbouring radii.
inline double min_gap(double region_radius) { return 1e-3 * region_radius; }

/// Sorts the genome and pushes radii apart so that
/// delta <= R_1, R_{k+1} - R_k >= delta and R_{N-1} <= R - delta.
/// Applying it twice gives the same genome.
inline void repair(std::vector<double>& genome, double region_radius) {
  if (genome.empty()) return;
  const double delta = min_gap(region_radius);
  if (static_cast<double>(genome.size() + 1) * delta > region_radius) {
    throw std::invalid_argument("repair: too many subregions for the minimum gap");
  }
  for (double& g : genome) {
    if (!std::isfinite(g)) g = 0.5 * region_radius;
  }
  std::sort(genome.begin(), genome.end());
  double prev = 0.0;
  for (double& g : genome) {
    g = std::max(g, prev + delta);
    prev = g;
  }
  double next = region_radius;
  for (auto it = genome.rbegin(); it != genome.rend(); ++it) {
    *it = std::min(*it, next - delta);
    next = *it;
  }
}

/// Objective value of the partition with the given inner radii (repaired
/// first). Infeasible or divergent partitions score +inf.
inline double evaluate_objective(std::vector<double> inner, const ObjectiveSpec& spec,
                                 const ScanGeometry& geom, double p_d, bool truncated = true) {
  repair(inner, geom.region_radius);
  const auto partition = Partition::from_inner(inner, geom);
  const auto probs = spiral::event_probs(partition, p_d, LocationModel::from(geom, truncated));
  if (!(probs.p_fail < 1.0)) return std::numeric_limits<double>::infinity();
  const spiral::AcquisitionTime law(partition, probs);
  const double v = spec.kind == Objective::mean ? law.mean() : law.ccdf(spec.tau);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

inline std::vector<double> uniform_inner(std::size_t n, double region_radius) {
  std::vector<double> g;
  for (std::size_t k = 1; k < n; ++k) {
    g.push_back(region_radius * static_cast<double>(k) / static_cast<double>(n));
  }
  return g;
}

/// Runs the genetic search for an n-subregion partition. Slot s of
/// generation g draws from its own stream (seed, g, s), so results do not
/// depend on evaluation order.
inline OptimizationResult optimize(std::size_t n, const ObjectiveSpec& spec, const ScanGeometry& geom,
                                   double p_d, const GaConfig& cfg, bool truncated = true) {
  cfg.validate();
  geom.validate();
  if (n < 1) throw std::invalid_argument("optimize: n must be >= 1");
  if (!(p_d > 0.0 && p_d <= 1.0)) throw std::domain_error("optimize: p_d must lie in (0, 1]");
  if (spec.kind == Objective::ccdf && !(spec.tau >= 0.0)) {
    throw std::domain_error("optimize: tau must be non-negative");
  }
  const double R = geom.region_radius;
  const std::size_t genes = n - 1;

  auto score = [&](const std::vector<double>& g) { return evaluate_objective(g, spec, geom, p_d, truncated); };

  if (genes == 0) {
    const double v = score({});
    return OptimizationResult{Partition::uniform(1, geom), v, {{0, v, v, v}}, 1, "single subregion", cfg};
  }

  struct Individual {
    std::vector<double> genome;
    double fitness;
  };
  std::vector<Individual> pop(cfg.population);
  std::size_t evaluations = 0;
  for (std::size_t s = 0; s < cfg.population; ++s) {
    std::vector<double> g;
    if (s == 0) {
      g = uniform_inner(n, R);
    } else {
      Rng rng = Rng::stream(cfg.seed, 0, s);
      g.resize(genes);
      for (double& x : g) x = R * rng.uniform();
    }
    repair(g, R);
    pop[s] = {g, score(g)};
    ++evaluations;
  }

  auto by_fitness = [](const Individual& a, const Individual& b) { return a.fitness < b.fitness; };
  auto record = [&](std::size_t gen, std::vector<GenerationStats>& hist) {
    std::vector<double> finite;
    for (const auto& ind : pop) {
      if (std::isfinite(ind.fitness)) finite.push_back(ind.fitness);
    }
    const double mean = finite.empty() ? std::numeric_limits<double>::infinity()
                                       : std::accumulate(finite.begin(), finite.end(), 0.0) /
                                             static_cast<double>(finite.size());
    hist.push_back({gen, pop.front().fitness, mean, pop.back().fitness});
  };

  std::vector<GenerationStats> history;
  std::stable_sort(pop.begin(), pop.end(), by_fitness);
  record(0, history);

  double best_seen = pop.front().fitness;
  std::size_t stall = 0;
  std::string reason = "generation limit";
  const double sigma_mut = cfg.mutation_scale * R;

  for (std::size_t gen = 1; gen <= cfg.generations; ++gen) {
    std::vector<Individual> next(pop.begin(), pop.begin() + static_cast<std::ptrdiff_t>(cfg.elites));
    for (std::size_t s = cfg.elites; s < cfg.population; ++s) {
      Rng rng = Rng::stream(cfg.seed, gen, s);
      auto pick = [&]() -> const Individual& {
        std::size_t best = static_cast<std::size_t>(rng.uniform() * static_cast<double>(pop.size()));
        for (std::size_t t = 1; t < cfg.tournament; ++t) {
          const auto c = static_cast<std::size_t>(rng.uniform() * static_cast<double>(pop.size()));
          best = std::min(best, c);  // population is sorted best-first
        }
        return pop[best];
      };
      const auto& a = pick();
      const auto& b = pick();
      std::vector<double> child = a.genome;
      if (rng.uniform() < cfg.crossover_rate) {
        for (std::size_t i = 0; i < genes; ++i) {
          const double lo = std::min(a.genome[i], b.genome[i]);
          const double hi = std::max(a.genome[i], b.genome[i]);
          const double span = hi - lo;
          child[i] = lo - cfg.blx_alpha * span + (1.0 + 2.0 * cfg.blx_alpha) * span * rng.uniform();
        }
      }
      for (double& x : child) {
        if (rng.uniform() < cfg.mutation_rate) x += sigma_mut * rng.normal();
        x = std::clamp(x, 0.0, R);
      }
      repair(child, R);
      const double f = score(child);
      ++evaluations;
      next.push_back({std::move(child), f});
    }
    pop = std::move(next);
    std::stable_sort(pop.begin(), pop.end(), by_fitness);
    record(gen, history);

    const double best = pop.front().fitness;
    if (best < best_seen - 1e-12 * std::abs(best_seen)) {
      best_seen = best;
      stall = 0;
    } else if (++stall >= cfg.stall_generations) {
      reason = "stalled";
      break;
    }
  }

  return OptimizationResult{Partition::from_inner(pop.front().genome, geom), pop.front().fitness,
                            std::move(history), evaluations, reason, cfg};
}

/// generation,best,mean,worst
inline void write_trace_csv(const std::string& path, const std::vector<GenerationStats>& history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open trace file: " + path);
  os << "generation,best,mean,worst\n";
  char buf[128];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", h.generation, h.best, h.mean, h.worst);
    os << buf;
  }
}

}  // namespace fsoacq::ga
