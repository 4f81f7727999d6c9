#pragma once

// Summary statistics, standard errors and two-sample tests used by the
// Monte Carlo checks. Sums use a fixed pairwise order so results do not
// depend on how replicates were scheduled.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "phasediff/errors.hpp"

namespace phasediff::stats {

inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 16) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline double mean(std::span<const double> x) {
  if (x.empty()) throw DomainError("mean of empty sample");
  return pairwise_sum(x) / static_cast<double>(x.size());
}

// Unbiased sample variance (two-pass).
inline double variance(std::span<const double> x) {
  if (x.size() < 2) throw DomainError("variance needs at least two samples");
  const double m = mean(x);
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - m) * (x[i] - m);
  return pairwise_sum(sq) / static_cast<double>(x.size() - 1);
}

struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;
  double se_mean = 0.0;
  // Delta-method standard error of the sample variance, sqrt((m4 - s^4) / n).
  double se_variance = 0.0;
  // Second raw moment E[x^2] and its standard error.
  double second_moment = 0.0;
  double se_second_moment = 0.0;
};

inline Summary summarize(std::span<const double> x) {
  Summary s;
  s.count = x.size();
  s.mean = mean(x);
  s.variance = variance(x);
  const auto n = static_cast<double>(x.size());
  s.se_mean = std::sqrt(s.variance / n);
  std::vector<double> c4(x.size()), sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - s.mean;
    c4[i] = d * d * d * d;
    sq[i] = x[i] * x[i];
  }
  const double m4 = pairwise_sum(c4) / n;
  s.se_variance = std::sqrt(std::max(0.0, m4 - s.variance * s.variance) / n);
  s.second_moment = pairwise_sum(sq) / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = sq[i] - s.second_moment;
    c4[i] = d * d;
  }
  s.se_second_moment = std::sqrt(pairwise_sum(c4) / (n - 1.0) / n);
  return s;
}

// Sample covariance of two equally long samples.
inline double covariance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("covariance: size mismatch");
  const double mx = mean(x);
  const double my = mean(y);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = (x[i] - mx) * (y[i] - my);
  return pairwise_sum(p) / static_cast<double>(x.size() - 1);
}

// Standard error of the sample covariance, from the variance of the centred
// products.
inline double covariance_se(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x);
  const double my = mean(y);
  std::vector<double> p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = (x[i] - mx) * (y[i] - my);
  return std::sqrt(variance(p) / static_cast<double>(x.size()));
}

// Linear interpolation between order statistics (type 7).
inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) throw DomainError("quantile of empty sample");
  if (q < 0.0 || q > 1.0) throw DomainError("quantile level outside [0,1]");
  std::sort(x.begin(), x.end());
  const double h = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

// Kolmogorov limiting survival function Q(t) = 2 sum (-1)^{k-1} exp(-2 k^2 t^2).
inline double kolmogorov_survival(double t) {
  if (t <= 0.0) return 1.0;
  if (t < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  // D above this rejects equality of laws at the 1% level (asymptotic).
  double critical_1pct = 0.0;

  bool passes(double alpha = 0.01) const { return p_value > alpha; }
};

// Two-sample Kolmogorov-Smirnov test. The p-value uses the asymptotic law
// with Stephens' small-sample correction.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsResult r;
  r.statistic = d;
  const double ne = na * nb / (na + nb);
  const double sq = std::sqrt(ne);
  r.p_value = kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);
  r.critical_1pct = 1.6276 / sq;
  return r;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("linear_fit: need >= 2 points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// Binomial proportion with its standard error.
struct Proportion {
  double estimate = 0.0;
  double se = 0.0;
  std::size_t trials = 0;
};

inline Proportion proportion(std::size_t hits, std::size_t trials) {
  if (trials == 0) throw DomainError("proportion: zero trials");
  Proportion p;
  p.trials = trials;
  p.estimate = static_cast<double>(hits) / static_cast<double>(trials);
  p.se = std::sqrt(p.estimate * (1.0 - p.estimate) / static_cast<double>(trials));
  return p;
}

}  // namespace phasediff::stats
