#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fsoacq/adaptive_spiral.hpp"
#include "fsoacq/montecarlo.hpp"
#include "fsoacq/numerics.hpp"
#include "oracles.hpp"

using namespace fsoacq;
using spiral::AcquisitionTime;
using spiral::event_probs;

namespace {

const ScanGeometry kGeom{};
const LocationModel kTruncated = LocationModel::from(kGeom, true);

AcquisitionTime law(const Partition& p, double p_d, const LocationModel& m = kTruncated) {
  return AcquisitionTime(p, event_probs(p, p_d, m));
}

Partition random_partition(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(0.5, 49.5);
  std::vector<double> inner(n - 1);
  for (auto& x : inner) x = u(gen);
  std::sort(inner.begin(), inner.end());
  for (std::size_t i = 1; i < inner.size(); ++i) inner[i] = std::max(inner[i], inner[i - 1] + 1e-3);
  return Partition::from_inner(inner, kGeom);
}

}  // namespace

TEST(EventProbs, SingleRegionIsNonAdaptive) {
  const auto pr = event_probs(Partition::uniform(1, kGeom), 0.05, kTruncated);
  ASSERT_EQ(pr.e.size(), 1u);
  EXPECT_NEAR(pr.e[0], 0.05, 1e-15);
  EXPECT_NEAR(pr.p_fail, 0.95, 1e-15);
}

TEST(EventProbs, CertainDetection) {
  const auto p = Partition::uniform(2, kGeom);
  const auto pr = event_probs(p, 1.0, kTruncated);
  EXPECT_NEAR(pr.e[0], rayleigh_cdf(25.0, kTruncated), 1e-15);
  EXPECT_NEAR(pr.e[1], 1.0 - rayleigh_cdf(25.0, kTruncated), 1e-15);
  EXPECT_DOUBLE_EQ(pr.p_fail, 0.0);
}

TEST(EventProbs, MatchesOutcomeEnumeration) {
  const auto p = Partition::uniform(7, kGeom);
  const auto pr = event_probs(p, 0.05, kTruncated);
  const auto ref = oracle::enumerate_events(p, 0.05, kTruncated);
  for (std::size_t k = 0; k < 7; ++k) EXPECT_NEAR(pr.e[k], ref.e[k], 1e-12) << k;
  EXPECT_NEAR(pr.p_fail, ref.p_fail, 1e-12);
}

TEST(EventProbs, NormalizationOverRandomPartitions) {
  std::mt19937_64 gen(42);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 9;
    const auto p = random_partition(gen, n);
    for (double p_d : {0.02, 0.05, 0.3}) {
      const auto pr = event_probs(p, p_d, kTruncated);
      double sum = pr.p_fail;
      for (double e : pr.e) {
        EXPECT_GE(e, 0.0);
        EXPECT_LE(e, 1.0);
        sum += e;
      }
      EXPECT_NEAR(sum, 1.0, 1e-10);
    }
  }
}

TEST(EventProbs, ConditionedVariantStaysNormalizedAndClose) {
  const auto p = Partition::uniform(7, kGeom);
  const auto approx = event_probs(p, 0.05, kTruncated);
  const auto exact = event_probs(p, 0.05, kTruncated, spiral::EventModel::conditioned);
  for (std::size_t k = 0; k < 7; ++k) EXPECT_NEAR(exact.e[k], approx.e[k], 0.01);
  EXPECT_THROW(event_probs(p, 0.0, kTruncated), std::domain_error);
}

TEST(Mean, UniformSevenRegions) {
  const double m = law(Partition::uniform(7, kGeom), 0.05).mean();
  EXPECT_NEAR(m, 69.19, 0.01 * 69.19);
  EXPECT_NEAR(m, 68.8769, 1e-3);
}

TEST(Mean, UntruncatedNormalizationMissesUniformTarget) {
  const double m = law(Partition::uniform(7, kGeom), 0.05, LocationModel::from(kGeom, false)).mean();
  EXPECT_GT(std::abs(m - 69.19), 0.01 * 69.19);
}

TEST(Mean, KnownUniformValues) {
  EXPECT_NEAR(law(Partition::uniform(1, kGeom), 0.05).mean(), 119.85, 0.01);
  EXPECT_NEAR(law(Partition::uniform(2, kGeom), 0.05).mean(), 85.008, 0.001);
  EXPECT_NEAR(law(Partition::uniform(3, kGeom), 0.05).mean(), 77.714, 0.001);
}

TEST(Mean, OptimizedRadiiLayout) {
  const std::vector<double> inner{18.922, 19.633, 20.320, 20.983, 21.627, 22.252};
  const double m = law(Partition::from_inner(inner, kGeom), 0.05).mean();
  EXPECT_LE(m, 55.0);
  EXPECT_NEAR(m, 53.27, 0.02 * 53.27);
}

TEST(Mean, EqualsIntegralOfDensityAndCcdf) {
  for (std::size_t n : {1u, 3u, 7u}) {
    const auto t = law(Partition::uniform(n, kGeom), 0.05);
    const double bn = t.partition().scan_period();
    const double upper = static_cast<double>(t.scan_cutoff() + 1) * bn;
    double by_density = 0.0;
    double by_ccdf = 0.0;
    for (double a = 0.0; a < upper; a += bn) {
      for (std::size_t k = 0; k < n; ++k) {
        const double lo = a + t.partition().beta(k);
        const double hi = a + t.partition().beta(k + 1);
        by_density += numerics::integrate([&](double x) { return x * t.density(x); }, lo, hi, 1e-12);
        by_ccdf += numerics::integrate([&](double x) { return t.ccdf(x); }, lo, hi, 1e-12);
      }
    }
    EXPECT_NEAR(by_density / t.mean(), 1.0, 1e-6) << n;
    EXPECT_NEAR(by_ccdf / t.mean(), 1.0, 1e-4) << n;
  }
}

TEST(Mean, DivergesWhenScansAlwaysFail) {
  spiral::SpiralEventProbs pr{{0.0}, 1.0, false};
  EXPECT_THROW((void)AcquisitionTime(Partition::uniform(1, kGeom), pr).mean(), DivergenceError);
}

TEST(Mean, CollapsedPartitionMatchesSingleRegion) {
  const double single = law(Partition::uniform(1, kGeom), 0.05).mean();
  const auto collapsed = Partition({50.0 * (1 - 1e-9), 50.0}, kGeom);
  EXPECT_NEAR(law(collapsed, 0.05).mean() / single, 1.0, 1e-6);
}

TEST(Ccdf, BoundaryValues) {
  const auto t = law(Partition::uniform(7, kGeom), 0.05);
  EXPECT_DOUBLE_EQ(t.ccdf(0.0), 1.0);
  EXPECT_LT(t.ccdf(t.partition().scan_period() * 1e10), 1e-9);
  EXPECT_THROW((void)t.ccdf(-1.0), std::domain_error);
}

TEST(Ccdf, NonIncreasingAndBothRoutesAgree) {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_partition(gen, 1 + trial % 7);
    for (double p_d : {0.02, 0.05, 0.08, 0.5}) {
      const auto t = law(p, p_d);
      double prev = 1.0;
      for (double tau = 0.0; tau <= 600.0; tau += 0.37) {
        const double v = t.ccdf(tau);
        ASSERT_LE(v, prev + 1e-15);
        ASSERT_NEAR(v, t.ccdf_closed_form(tau), 1e-12) << "tau=" << tau;
        prev = v;
      }
    }
  }
}

TEST(Ccdf, MatchesDensityIntegral) {
  const auto t = law(Partition::uniform(7, kGeom), 0.05);
  const double bn = t.partition().scan_period();
  for (double tau : {3.0, 20.0, 80.0, 200.0}) {
    double below = 0.0;
    for (double a = 0.0; a < tau; a += bn) {
      for (std::size_t k = 0; k < 7; ++k) {
        const double lo = a + t.partition().beta(k);
        const double hi = std::min(tau, a + t.partition().beta(k + 1));
        if (hi > lo) below += numerics::integrate([&](double x) { return t.density(x); }, lo, hi, 1e-13);
      }
    }
    EXPECT_NEAR(t.ccdf(tau), 1.0 - below, 1e-10) << tau;
  }
}

TEST(Density, IntegratesToOne) {
  for (std::size_t n : {1u, 4u, 7u}) {
    const auto t = law(Partition::uniform(n, kGeom), 0.05);
    const double bn = t.partition().scan_period();
    double mass = 0.0;
    for (std::size_t i = 0; i <= t.scan_cutoff(); ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double lo = static_cast<double>(i) * bn + t.partition().beta(k);
        const double hi = static_cast<double>(i) * bn + t.partition().beta(k + 1);
        mass += numerics::integrate([&](double x) { return t.density(x); }, lo, hi, 1e-13);
      }
    }
    EXPECT_NEAR(mass, 1.0, 1e-8) << n;
  }
}

TEST(Density, AtomsAndComponents) {
  const auto t = law(Partition::uniform(7, kGeom), 0.05);
  const double p = t.probs().p_fail;
  EXPECT_NEAR(t.mass_w(0).mass, 1.0 - p, 1e-15);
  EXPECT_DOUBLE_EQ(t.mass_w(0).location, 0.0);
  EXPECT_NEAR(t.mass_w(3).location, 3 * t.partition().scan_period(), 1e-12);
  const auto v_atoms = t.atoms_v();
  ASSERT_EQ(v_atoms.size(), 1u);
  EXPECT_NEAR(v_atoms[0].mass, p, 1e-15);
  EXPECT_NEAR(v_atoms[0].location, t.partition().scan_period(), 1e-12);

  // Continuous part of f_V carries 1 - p; f_V' is a proper density.
  double v_mass = 0.0;
  double vp_mass = 0.0;
  for (std::size_t k = 0; k < 7; ++k) {
    const double lo = t.partition().beta(k);
    const double hi = t.partition().beta(k + 1);
    v_mass += numerics::integrate([&](double v) { return t.density_v(v); }, lo, hi, 1e-13);
    vp_mass += numerics::integrate([&](double v) { return t.density_v_prime(v); }, lo, hi, 1e-13);
  }
  EXPECT_NEAR(v_mass + p, 1.0, 1e-10);
  EXPECT_NEAR(vp_mass, 1.0, 1e-10);

  double w_mass = 0.0;
  for (std::size_t i = 0; i <= t.scan_cutoff(); ++i) w_mass += t.mass_w(i).mass;
  EXPECT_NEAR(w_mass, 1.0, 1e-13);

  double y_mass = 0.0;
  for (const auto& a : t.atoms_y()) y_mass += a.mass;
  EXPECT_NEAR(y_mass, 1.0, 1e-12);
}

TEST(Simulation, SingleRegionMean) {
  const auto p = Partition::uniform(1, kGeom);
  mc::McConfig cfg;
  cfg.trials = 100000;
  cfg.seed = 11;
  const auto s = mc::simulate_adaptive_spiral(p, 0.05, kTruncated, cfg);
  EXPECT_NEAR(s.empirical_mean / law(p, 0.05).mean(), 1.0, 0.02);
}

TEST(Simulation, ClosedFormsAgreeWithRenewalSimulation) {
  // The closed forms treat consecutive scans as independent; a simulation
  // that re-draws the location every scan realises exactly that model.
  for (std::size_t n : {1u, 2u, 3u, 7u}) {
    for (double p_d : {0.02, 0.05, 0.08}) {
      const auto p = Partition::uniform(n, kGeom);
      const auto t = law(p, p_d);
      mc::McConfig cfg;
      cfg.trials = 100000;
      cfg.seed = 100 * n + static_cast<std::uint64_t>(p_d * 1000);
      cfg.location_mode = mc::LocationMode::per_scan;
      cfg.ccdf_taus = {80.0};
      const auto s = mc::simulate_adaptive_spiral(p, p_d, kTruncated, cfg);
      EXPECT_LE(std::abs(s.empirical_mean - t.mean()), 3.0 * s.mean_stderr) << "n=" << n << " p_d=" << p_d;
      const double c = t.ccdf(80.0);
      const double se = std::sqrt(c * (1 - c) / 1e5);
      EXPECT_LE(std::abs(s.ccdf_points[0].estimate - c), 3.0 * se) << "n=" << n << " p_d=" << p_d;
    }
  }
}

TEST(Simulation, FixedReceiverMatchesItsExactLaw) {
  for (std::size_t n : {3u, 7u}) {
    const auto p = Partition::uniform(n, kGeom);
    mc::McConfig cfg;
    cfg.trials = 100000;
    cfg.seed = 77 + n;
    cfg.ccdf_taus = {80.0};
    const auto s = mc::simulate_adaptive_spiral(p, 0.05, kTruncated, cfg);
    const double mean = oracle::fixed_receiver_mean(p, 0.05, kTruncated);
    const double c = oracle::fixed_receiver_ccdf(80.0, p, 0.05, kTruncated);
    EXPECT_LE(std::abs(s.empirical_mean - mean), 3.0 * s.mean_stderr) << n;
    EXPECT_LE(std::abs(s.ccdf_points[0].estimate - c), 3.0 * std::sqrt(c * (1 - c) / 1e5)) << n;
    // A receiver that stays put is re-missed in every scan, so its mean sits
    // well above the renewal closed form once N > 1.
    EXPECT_GT(mean, 1.05 * law(p, 0.05).mean());
  }
  const auto single = Partition::uniform(1, kGeom);
  EXPECT_NEAR(oracle::fixed_receiver_mean(single, 0.05, kTruncated) / law(single, 0.05).mean(), 1.0, 1e-10);
}
