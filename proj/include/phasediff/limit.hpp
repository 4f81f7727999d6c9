#pragma once

// The limit experiment: likelihood field exp{W(uJ) - |uJ|/2} with W a two-sided
// Brownian motion, its argmax and Pitman estimators, exact Hellinger moments,
// equivariance under shifts, tail decay and the minimax target E[(u*)^2].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "phasediff/errors.hpp"
#include "phasediff/likelihood.hpp"
#include "phasediff/parallel.hpp"
#include "phasediff/rng.hpp"
#include "phasediff/stats.hpp"

namespace phasediff {

struct LimitGrid {
  double K = 150.0;
  double du = 0.02;

  std::size_t half_cells() const { return static_cast<std::size_t>(std::llround(K / du)); }
  std::size_t size() const { return 2 * half_cells() + 1; }
  double u(std::size_t i) const {
    return (static_cast<double>(i) - static_cast<double>(half_cells())) * du;
  }
};

// w[i] holds W(u_i J) (plus the shift profile) on the grid u_i = (i - M) du.
struct LimitField {
  LimitGrid grid;
  double J = 1.0;
  double shift = 0.0;
  std::vector<double> w;

  double u(std::size_t i) const { return grid.u(i); }
  double log_likelihood(std::size_t i) const { return w[i] - 0.5 * J * std::abs(grid.u(i)); }
  std::size_t center() const { return grid.half_cells(); }
};

// Fills an existing field in place so Monte Carlo loops can reuse storage.
inline void fill_field(LimitField& f, std::uint64_t seed) {
  const std::size_t M = f.grid.half_cells();
  f.w.resize(2 * M + 1);
  const double step = std::sqrt(f.J * f.grid.du);
  const double drift = f.J * f.grid.du;
  const std::size_t shift_cells =
      static_cast<std::size_t>(std::llround(std::abs(f.shift) / f.grid.du));
  f.w[M] = 0.0;
  NormalStream right(seed, StreamTag::kFieldRight);
  NormalStream left(seed, StreamTag::kFieldLeft);
  double x = 0.0;
  for (std::size_t k = 1; k <= M; ++k) {
    x += step * right();
    if (f.shift > 0.0 && k <= shift_cells) x += drift;
    f.w[M + k] = x;
  }
  x = 0.0;
  for (std::size_t k = 1; k <= M; ++k) {
    x += step * left();
    if (f.shift < 0.0 && k <= shift_cells) x += drift;
    f.w[M - k] = x;
  }
}

// Two independent random walks from W(0) = 0 with per-step variance J du;
// a shift u0 adds drift J on the branch of sign(u0) up to |u0|, so the mean of
// w at u is J (|u0| ^ |u|) on that branch. The shift must be a grid multiple.
inline LimitField sample_field(double K, double du, double J, double shift_u0, std::uint64_t seed) {
  if (!(K > 0.0) || !(du > 0.0) || !(J > 0.0)) throw DomainError("sample_field: K, du, J must be positive");
  if (std::abs(shift_u0) > K) throw DomainError("sample_field: |u0| must not exceed K");
  const double cells = shift_u0 / du;
  if (std::abs(cells - std::round(cells)) > 1e-9) throw DomainError("sample_field: u0 must be a multiple of du");
  LimitField f{{K, du}, J, shift_u0, {}};
  fill_field(f, seed);
  return f;
}

struct LimitEstimates {
  double u_hat = 0.0;
  double u_star = 0.0;
  double max_log_l = 0.0;
  double mass_tail_fraction = 0.0;
  bool mle_tail_flag = false;    // argmax within 2 cells of +-K
  bool bayes_tail_flag = false;  // outer-10% mass >= 1e-6
};

inline constexpr double kTailMassLimit = 1e-6;

// Grid argmax of W(uJ) - |uJ|/2 with the smallest u winning ties.
inline double limit_mle(const LimitField& f, bool* tail_flag = nullptr) {
  std::size_t best = 0;
  double top = f.log_likelihood(0);
  for (std::size_t i = 1; i < f.w.size(); ++i) {
    const double v = f.log_likelihood(i);
    if (v > top) {
      top = v;
      best = i;
    }
  }
  if (tail_flag) *tail_flag = best <= 2 || best + 2 >= f.w.size() - 1;
  return f.u(best);
}

// Computes both estimators in one pass pair. Terms more than 40 log-units
// below the maximum are dropped from the trapezoid sums; their total weight is
// below size * e^-40 relative to the peak.
inline LimitEstimates limit_estimates(const LimitField& f) {
  LimitEstimates e;
  const std::size_t n = f.w.size();
  std::size_t best = 0;
  double top = f.log_likelihood(0);
  for (std::size_t i = 1; i < n; ++i) {
    const double v = f.log_likelihood(i);
    if (v > top) {
      top = v;
      best = i;
    }
  }
  e.u_hat = f.u(best);
  e.max_log_l = top;
  e.mle_tail_flag = best <= 2 || best + 2 >= n - 1;
  const double cutoff = top - 40.0;
  const double outer = 0.9 * f.grid.K;
  double num = 0.0, den = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = f.log_likelihood(i);
    if (v < cutoff) continue;
    const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * std::exp(v - top);
    const double u = f.u(i);
    num += w * u;
    den += w;
    if (std::abs(u) > outer) tail += w;
  }
  e.u_star = num / den;
  e.mass_tail_fraction = tail / den;
  e.bayes_tail_flag = !(e.mass_tail_fraction < kTailMassLimit);
  return e;
}

// Log-sum-exp trapezoid of u L and L over the grid.
inline double limit_bayes(const LimitField& f, double* mass_tail_fraction = nullptr) {
  const auto e = limit_estimates(f);
  if (mass_tail_fraction) *mass_tail_fraction = e.mass_tail_fraction;
  return e.u_star;
}

// --- Monte Carlo over fields ------------------------------------------------

// Estimates for replicate i use the field seeded by seed_stream(seed, i).
inline std::vector<LimitEstimates> limit_replicates(const LimitGrid& grid, double J, double shift,
                                                    std::size_t replicates, std::uint64_t seed) {
  std::vector<LimitEstimates> out(replicates);
  const unsigned workers = worker_count();
  std::vector<LimitField> scratch(std::max(1u, workers), LimitField{grid, J, shift, {}});
  // one field buffer per worker; replicate i goes to chunk i mod chunks
  const std::size_t chunks = scratch.size();
  parallel_for(chunks, [&](std::size_t c) {
    LimitField& f = scratch[c];
    for (std::size_t i = c; i < replicates; i += chunks) {
      fill_field(f, seed_stream(seed, i));
      out[i] = limit_estimates(f);
    }
  }, workers);
  return out;
}

struct VarianceStudy {
  // J^2 Var of u_hat and u_star over unflagged runs
  Estimate scaled_var_mle;
  Estimate scaled_var_bayes;
  Estimate mean_mle;
  Estimate mean_bayes;
  std::size_t used_mle = 0;
  std::size_t used_bayes = 0;
  std::size_t flagged_mle = 0;
  std::size_t flagged_bayes = 0;
};

inline VarianceStudy summarize_limit(const std::vector<LimitEstimates>& est, double J) {
  std::vector<double> a, b;
  VarianceStudy v;
  for (const auto& e : est) {
    if (e.mle_tail_flag) ++v.flagged_mle;
    else a.push_back(e.u_hat);
    if (e.bayes_tail_flag) ++v.flagged_bayes;
    else b.push_back(e.u_star);
  }
  if (a.size() < 2 || b.size() < 2) throw NumericError("limit study: too few unflagged runs");
  const auto sa = stats::summarize(a), sb = stats::summarize(b);
  const double j2 = J * J;
  v.scaled_var_mle = {sa.variance * j2, sa.se_variance * j2};
  v.scaled_var_bayes = {sb.variance * j2, sb.se_variance * j2};
  v.mean_mle = {sa.mean, sa.se_mean};
  v.mean_bayes = {sb.mean, sb.se_mean};
  v.used_mle = a.size();
  v.used_bayes = b.size();
  return v;
}

inline VarianceStudy limit_variance_study(double J, double K, double du, std::size_t replicates,
                                          std::uint64_t seed) {
  if (replicates < 2) throw DomainError("limit variance: need at least two replicates");
  return summarize_limit(limit_replicates({K, du}, J, 0.0, replicates, seed), J);
}

// --- exact Hellinger identities ---------------------------------------------

struct HellingerExact {
  double J = 1.0;
  double delta_u = 0.0;
  Estimate one_minus_sqrt_sq;
  Estimate sqrt_l;
  Estimate one_minus_quarter_4;
  double closed_one_minus_sqrt_sq = 0.0;
  double closed_sqrt_l = 0.0;
  double closed_one_minus_quarter_4 = 0.0;
  // H^2 / |delta| = E[(1 - sqrt L)^2] / (2 |delta|), whose small-delta limit is J/8
  Estimate hellinger_sq_per_delta;
  double closed_hellinger_sq_per_delta = 0.0;
};

// L = exp{W(delta J) - |delta J|/2} with W(delta J) ~ N(0, J |delta|).
//
// L is the density ratio of N(x, x) to N(0, x), x = J |delta|, so draws are
// taken from the balanced mixture of the two (even replicates from N(0, x),
// odd ones from N(x, x)) and weighted by 2 / (1 + L). Every weighted integrand
// is then bounded by 2 and the standard errors are reliable; under N(0, x)
// alone the fourth-root moment carries E[L^2] = e^x and its sample SE is far
// too small at x = 8.
inline HellingerExact hellinger_exact(double J, double delta_u, std::size_t replicates, std::uint64_t seed) {
  if (!(J > 0.0)) throw DomainError("hellinger_exact: J must be positive");
  if (replicates < 2) throw DomainError("hellinger_exact: need at least two replicates");
  const double x = J * std::abs(delta_u);
  const double sd = std::sqrt(x);
  std::vector<double> a(replicates), b(replicates), c(replicates);
  for (std::size_t i = 0; i < replicates; ++i) {
    const double w = sd * NormalStream::at(seed, StreamTag::kScalar, i) + (i % 2 == 1 ? x : 0.0);
    const double ll = w - 0.5 * x;
    const double weight = 2.0 / (1.0 + std::exp(ll));
    const double half = std::exp(0.5 * ll), quarter = std::exp(0.25 * ll);
    a[i] = weight * (1.0 - half) * (1.0 - half);
    b[i] = weight * half;
    c[i] = weight * std::pow(1.0 - quarter, 4);
  }
  HellingerExact h;
  h.J = J;
  h.delta_u = delta_u;
  h.one_minus_sqrt_sq = detail::mean_estimate(a);
  h.sqrt_l = detail::mean_estimate(b);
  h.one_minus_quarter_4 = detail::mean_estimate(c);
  h.closed_one_minus_sqrt_sq = hellinger_closed_sq(x);
  h.closed_sqrt_l = hellinger_closed_sqrt(x);
  h.closed_one_minus_quarter_4 = hellinger_closed_quarter(x);
  if (delta_u != 0.0) {
    const double scale = 0.5 / std::abs(delta_u);
    h.hellinger_sq_per_delta = {h.one_minus_sqrt_sq.value * scale, h.one_minus_sqrt_sq.se * scale};
    h.closed_hellinger_sq_per_delta = h.closed_one_minus_sqrt_sq * scale;
  }
  return h;
}

// --- equivariance -----------------------------------------------------------

struct EquivarianceResult {
  std::vector<double> shifts;
  std::vector<Estimate> mean_error;  // mean of u* - u0 per shift
  // pairwise (i < j) in lexicographic order
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<stats::KsResult> ks;
  std::size_t flagged = 0;
};

// Shift j uses seeds seed_stream(seed_stream(seed, j), i).
inline EquivarianceResult equivariance_check(double J, const std::vector<double>& u0_list,
                                             std::size_t replicates, std::uint64_t seed,
                                             double K = 150.0, double du = 0.02) {
  EquivarianceResult res;
  res.shifts = u0_list;
  std::vector<std::vector<double>> errs;
  for (std::size_t j = 0; j < u0_list.size(); ++j) {
    const double u0 = u0_list[j];
    if (std::abs(u0) > K / 4.0) throw DomainError("equivariance: need |u0| <= K/4");
    const auto est = limit_replicates({K, du}, J, u0, replicates, seed_stream(seed, j));
    std::vector<double> e;
    e.reserve(est.size());
    for (const auto& x : est) {
      if (x.bayes_tail_flag) {
        ++res.flagged;
        continue;
      }
      e.push_back(x.u_star - u0);
    }
    res.mean_error.push_back(detail::mean_estimate(e));
    errs.push_back(std::move(e));
  }
  for (std::size_t i = 0; i < errs.size(); ++i)
    for (std::size_t j = i + 1; j < errs.size(); ++j) {
      res.pairs.emplace_back(i, j);
      res.ks.push_back(stats::ks_two_sample(errs[i], errs[j]));
    }
  return res;
}

// --- tail decay -------------------------------------------------------------

struct TailDecay {
  std::vector<double> K_list;
  std::vector<stats::Proportion> exceedance;  // P(sup_{|u|>K} L >= 1)
  bool strictly_decreasing = false;
  stats::LinearFit log_fit;  // log p against K over the positive estimates
};

// For each field, records the largest log-likelihood beyond each K; an empty
// supremum (K at or beyond the grid edge) never exceeds.
inline TailDecay tail_decay_check(double J, std::size_t replicates, std::vector<double> K_list,
                                  std::uint64_t seed, double grid_K = 150.0, double du = 0.02) {
  for (std::size_t i = 0; i + 1 < K_list.size(); ++i)
    if (!(K_list[i + 1] > K_list[i])) throw DomainError("tail_decay: K list must be increasing");
  TailDecay out;
  out.K_list = K_list;
  const LimitGrid grid{grid_K, du};
  const auto hits = map_replicates<std::vector<char>>(replicates, [&](std::size_t i) {
    LimitField f{grid, J, 0.0, {}};
    fill_field(f, seed_stream(seed, i));
    std::vector<char> h(K_list.size(), 0);
    for (std::size_t q = 0; q < K_list.size(); ++q) {
      if (K_list[q] >= grid_K) continue;
      double sup = -INFINITY;
      for (std::size_t k = 0; k < f.w.size(); ++k)
        if (std::abs(f.u(k)) > K_list[q]) sup = std::max(sup, f.log_likelihood(k));
      h[q] = sup >= 0.0;
    }
    return h;
  });
  std::vector<double> xs, ys;
  for (std::size_t q = 0; q < K_list.size(); ++q) {
    std::size_t count = 0;
    for (const auto& h : hits) count += static_cast<std::size_t>(h[q]);
    out.exceedance.push_back(stats::proportion(count, replicates));
    if (count > 0) {
      xs.push_back(K_list[q]);
      ys.push_back(std::log(out.exceedance.back().estimate));
    }
  }
  out.strictly_decreasing = true;
  for (std::size_t q = 0; q + 1 < out.exceedance.size(); ++q)
    if (!(out.exceedance[q + 1].estimate < out.exceedance[q].estimate)) out.strictly_decreasing = false;
  if (xs.size() >= 2) out.log_fit = stats::linear_fit(xs, ys);
  return out;
}

// --- minimax target ---------------------------------------------------------

// E[(u*)^2] under the unshifted field.
inline Estimate lam_target(double J, std::size_t replicates, std::uint64_t seed, double K = 150.0,
                           double du = 0.02) {
  const auto est = limit_replicates({K, du}, J, 0.0, replicates, seed);
  std::vector<double> sq;
  sq.reserve(est.size());
  for (const auto& e : est)
    if (!e.bayes_tail_flag) sq.push_back(e.u_star);
  const auto s = stats::summarize(sq);
  return {s.second_moment, s.se_second_moment};
}

}  // namespace phasediff
