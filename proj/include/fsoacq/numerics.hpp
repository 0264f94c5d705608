#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace fsoacq::numerics {

inline constexpr double kPi = std::numbers::pi;

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Pairwise (cascade) summation; result depends only on the element order.
inline double pairwise_sum(std::span<const double> xs) noexcept {
  if (xs.size() <= 16) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct Minimum {
  double x;
  double fx;
};

/// Golden-section search for the minimum of a unimodal function on [lo, hi].
/// Stops once the bracket is narrower than `x_tol`.
template <class F>
Minimum golden_section_minimize(F&& f, double lo, double hi, double x_tol) {
  constexpr double inv_phi = 0.6180339887498948482;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > x_tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? Minimum{c, fc} : Minimum{d, fd};
}

/// Adaptive 61-point Gauss-Kronrod quadrature; bounds may be infinite.
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-12,
                 unsigned max_depth = 18, double* error = nullptr) {
  double err = 0.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, a, b, max_depth, rel_tol, &err);
  if (error != nullptr) *error = err;
  return v;
}

}  // namespace fsoacq::numerics
