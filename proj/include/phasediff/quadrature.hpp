#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace phasediff::quad {

// Adaptive Gauss-Kronrod (31 points) on [a, b]. The integrand must be smooth
// on the open interval; split at known discontinuities with integrate_pieces.
// Slivers a few ulps wide, left over when breakpoints nearly coincide, never
// meet a relative tolerance, so they take the midpoint rule instead.
template <typename F>
double integrate(F&& f, double a, double b, double tol = 1e-12) {
  if (b <= a) return 0.0;
  if (b - a <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)})) return (b - a) * f(0.5 * (a + b));
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, tol);
}

// Integral over [a, b] split at every breakpoint inside the interval.
template <typename F>
double integrate_pieces(F&& f, double a, double b, std::vector<double> breaks, double tol = 1e-12) {
  breaks.push_back(a);
  breaks.push_back(b);
  std::sort(breaks.begin(), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = std::max(a, breaks[i]);
    const double hi = std::min(b, breaks[i + 1]);
    if (hi > lo) total += integrate(f, lo, hi, tol);
  }
  return total;
}

// E[f(X)] for X ~ N(mean, variance), integrating over mean +- 12 sd.
template <typename F>
double gaussian_expectation(F&& f, double mean, double variance) {
  const double sd = std::sqrt(variance);
  auto g = [&](double z) {
    return f(mean + sd * z) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  };
  return integrate_pieces(g, -12.0, 12.0, {-4.0, 0.0, 4.0}, 1e-13);
}

}  // namespace phasediff::quad
