#pragma once

// Maximum-likelihood and Bayes (uniform prior) estimators of the phase from a
// grid path, the scaling constant J_theta, and Monte Carlo studies of the
// rescaled estimation errors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phasediff/ergodic.hpp"
#include "phasediff/errors.hpp"
#include "phasediff/likelihood.hpp"
#include "phasediff/model.hpp"
#include "phasediff/parallel.hpp"
#include "phasediff/rng.hpp"
#include "phasediff/simulate.hpp"
#include "phasediff/stats.hpp"

namespace phasediff {

// 16 zeta(3), the limit variance of the Pitman estimator for J = 1.
inline constexpr double kApery = 1.2020569031595942;
inline constexpr double kPitmanVariance = 16.0 * kApery;
inline constexpr double kArgmaxVariance = 26.0;

// --- J_theta ----------------------------------------------------------------

struct JThetaEmpirical {
  std::size_t n_periods = 2000;
  std::size_t replicates = 8;
  std::uint64_t seed = 1;
  int steps_per_period = 1000;
};

// J_theta = {lambda*(theta)^2 (mu P_{0,theta}) + lambda*(theta+a)^2 (mu P_{0,theta+a})}(1/sigma^2)
// through the deterministic marginals (affine drift with gamma > 0 only).
inline double j_theta_analytic(const DiffusionModel& model, double theta) {
  const SignalSpec& sig = model.signal();
  if (!sig.in_parameter_space(theta)) throw DomainError("j_theta: theta outside Theta");
  if (!model.ou_type()) throw DomainError("j_theta: analytic mode unsupported for non-affine drift");
  const double ls0 = sig.lambda_star()(theta);
  const double ls1 = sig.lambda_star()(theta + sig.duration());
  if (model.constant_sigma()) {
    const double s = model.sigma().p0();
    return (ls0 * ls0 + ls1 * ls1) / (s * s);
  }
  const DiffusionModel m = model.with_theta(theta);
  const PeriodicMarginals marginals(m);
  const Observable f = Observable::inverse_square(m.sigma());
  return ls0 * ls0 * marginals.expectation(f, theta) +
         ls1 * ls1 * marginals.expectation(f, theta + sig.duration());
}

namespace detail {

// xi at phase r of every period, linearly interpolated between grid points.
inline double interpolate_phase(std::span<const double> seg, double r, double dt) {
  const double idx = r / dt;
  const auto lo = static_cast<std::size_t>(std::floor(idx));
  if (lo + 1 >= seg.size()) return seg.back();
  const double w = idx - static_cast<double>(lo);
  return (1.0 - w) * seg[lo] + w * seg[lo + 1];
}

}  // namespace detail

// Averages 1/sigma^2(xi_{kT+r}) over k at r = theta and theta + a, per
// replicate path; returns the mean over replicates and its standard error.
inline Estimate j_theta_empirical(const DiffusionModel& model, double theta, const JThetaEmpirical& opt) {
  const SignalSpec& sig = model.signal();
  if (!sig.in_parameter_space(theta)) throw DomainError("j_theta: theta outside Theta");
  if (opt.replicates < 2) throw DomainError("j_theta: need at least two replicates");
  const DiffusionModel m = model.with_theta(theta);
  const double ls0 = sig.lambda_star()(theta);
  const double ls1 = sig.lambda_star()(theta + sig.duration());
  const std::size_t burn = default_burn_in(m);
  const auto per_rep = map_replicates<double>(opt.replicates, [&](std::size_t i) {
    const auto path = simulate_stationary(m, opt.n_periods, opt.steps_per_period, seed_stream(opt.seed, i), burn);
    const SegmentChain chain(path);
    const double dt = path.dt();
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t k = 0; k < chain.count(); ++k) {
      const double x0 = detail::interpolate_phase(chain[k], theta, dt);
      const double x1 = detail::interpolate_phase(chain[k], theta + sig.duration(), dt);
      const double q0 = m.sigma()(x0), q1 = m.sigma()(x1);
      s0 += 1.0 / (q0 * q0);
      s1 += 1.0 / (q1 * q1);
    }
    const double n = static_cast<double>(chain.count());
    return ls0 * ls0 * s0 / n + ls1 * ls1 * s1 / n;
  });
  const auto s = stats::summarize(per_rep);
  return {s.mean, s.se_mean};
}

// --- estimators -------------------------------------------------------------

// Cell centers (q + 1/2) dt inside Theta. Every zeta in [q dt, (q + 1) dt)
// switches the burst on over the same grid steps, so the likelihood is constant
// on those cells and the centers represent them without bias.
inline std::vector<double> default_zeta_grid(const SignalSpec& signal, int steps_per_period) {
  const double dt = signal.period() / steps_per_period;
  std::vector<double> grid;
  for (int q = 0;; ++q) {
    const double z = (q + 0.5) * dt;
    if (!(z + 0.5 * dt <= signal.theta_max() * (1.0 + 1e-12))) break;
    grid.push_back(z);
  }
  if (grid.empty()) throw DomainError("parameter space holds no grid cell");
  return grid;
}

inline double midpoint_of_theta(const SignalSpec& signal) { return 0.5 * signal.theta_max(); }

namespace detail {

inline void check_zeta_grid(const SignalSpec& signal, std::span<const double> grid) {
  if (grid.empty()) throw DomainError("empty zeta grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!signal.in_closure(grid[i])) throw DomainError("zeta grid point outside closure(Theta)");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw DomainError("zeta grid must be strictly increasing");
  }
}

}  // namespace detail

// Smallest grid point attaining the maximum of a curve.
inline double argmax_min(std::span<const double> grid, std::span<const double> log_l) {
  if (grid.empty() || grid.size() != log_l.size()) throw DomainError("argmax: grid and curve sizes differ");
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (log_l[i] > log_l[best]) best = i;
  return grid[best];
}

// Trapezoid ratio int zeta L / int L with the curve given in log scale,
// stabilized by the maximum.
inline double posterior_mean(std::span<const double> grid, std::span<const double> log_l) {
  if (grid.empty() || grid.size() != log_l.size()) throw DomainError("posterior_mean: grid and curve sizes differ");
  if (grid.size() == 1) return grid[0];
  const double top = *std::max_element(log_l.begin(), log_l.end());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double left = i > 0 ? grid[i] - grid[i - 1] : 0.0;
    const double right = i + 1 < grid.size() ? grid[i + 1] - grid[i] : 0.0;
    const double w = 0.5 * (left + right) * std::exp(log_l[i] - top);
    num += w * grid[i];
    den += w;
  }
  if (!(den > 0.0)) throw NumericError("posterior_mean: total mass underflow");
  return num / den;
}

inline std::vector<double> log_likelihood_on_grid(const PhaseStatistics& stats, std::span<const double> grid,
                                                  double reference) {
  const double base = stats.log_likelihood(reference);
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    out[i] = grid[i] == reference ? 0.0 : stats.log_likelihood(grid[i]) - base;
  return out;
}

// Smallest zeta on the grid maximizing log L^{zeta/zeta0}, zeta0 the midpoint of Theta.
inline double mle(const PathGrid& path, const DiffusionModel& model, std::span<const double> zeta_grid) {
  detail::check_zeta_grid(model.signal(), zeta_grid);
  const PhaseStatistics stats(path, model);
  const auto ll = log_likelihood_on_grid(stats, zeta_grid, midpoint_of_theta(model.signal()));
  return argmax_min(zeta_grid, ll);
}

// Posterior mean under the uniform prior on Theta.
inline double bayes(const PathGrid& path, const DiffusionModel& model, std::span<const double> zeta_grid) {
  detail::check_zeta_grid(model.signal(), zeta_grid);
  const PhaseStatistics stats(path, model);
  const auto ll = log_likelihood_on_grid(stats, zeta_grid, midpoint_of_theta(model.signal()));
  return posterior_mean(zeta_grid, ll);
}

// --- Monte Carlo study ------------------------------------------------------

struct EstimateRecord {
  std::size_t replicate = 0;
  double theta_hat = 0.0;
  double theta_star = 0.0;
  double true_theta = 0.0;
  std::size_t n_periods = 0;
  double err_mle_rescaled = 0.0;
  double err_be_rescaled = 0.0;
  std::uint64_t seed = 0;
};

struct ErrorMoments {
  stats::Summary summary;  // of the rescaled errors
  // E[err^2], the quadratic risk
  Estimate risk;
};

struct McStudy {
  double theta = 0.0;
  double theta_effective = 0.0;
  std::optional<double> contiguous_u;
  std::size_t n_periods = 0;
  int steps_per_period = 0;
  double j = 0.0;  // analytic J when available, NaN otherwise
  std::vector<EstimateRecord> records;
  ErrorMoments mle;
  ErrorMoments bayes;
  // limit targets 26 / J^2 and 16 zeta(3) / J^2
  double target_var_mle = 0.0;
  double target_var_bayes = 0.0;
};

struct McStudyOptions {
  int steps_per_period = 1000;
  // 0 selects default_burn_in(model)
  std::size_t burn_in_periods = 0;
};

inline ErrorMoments error_moments(const std::vector<double>& err) {
  ErrorMoments m;
  m.summary = stats::summarize(err);
  m.risk = {m.summary.second_moment, m.summary.se_second_moment};
  return m;
}

// Replicate i simulates under theta + u/n with seed_stream(seed, i) and
// estimates on the default grid; errors are n(estimate - (theta + u/n)).
inline McStudy mc_study(const DiffusionModel& model, double theta, std::size_t n_periods,
                        std::size_t replicates, std::uint64_t seed, std::optional<double> contiguous_u,
                        const McStudyOptions& opt = {}) {
  const SignalSpec& sig = model.signal();
  if (replicates < 2) throw DomainError("mc_study: need at least two replicates");
  if (n_periods == 0) throw DomainError("mc_study: n_periods must be positive");
  if (!sig.identifiable()) throw DomainError("mc_study: lambda_star must be strictly positive");
  McStudy study;
  study.theta = theta;
  study.contiguous_u = contiguous_u;
  study.n_periods = n_periods;
  study.steps_per_period = opt.steps_per_period;
  const double n = static_cast<double>(n_periods);
  study.theta_effective = theta + contiguous_u.value_or(0.0) / n;
  if (!sig.in_parameter_space(theta) || !sig.in_parameter_space(study.theta_effective))
    throw DomainError("mc_study: theta + u/n outside Theta");
  const DiffusionModel truth = model.with_theta(study.theta_effective);
  const std::size_t burn = opt.burn_in_periods ? opt.burn_in_periods : default_burn_in(truth);
  const auto grid = default_zeta_grid(sig, opt.steps_per_period);
  const double ref = midpoint_of_theta(sig);
  study.records = map_replicates<EstimateRecord>(replicates, [&](std::size_t i) {
    const std::uint64_t child = seed_stream(seed, i);
    const auto path = simulate_stationary(truth, n_periods, opt.steps_per_period, child, burn);
    const PhaseStatistics stats(path, truth);
    const auto ll = log_likelihood_on_grid(stats, grid, ref);
    EstimateRecord r;
    r.replicate = i;
    r.theta_hat = argmax_min(grid, ll);
    r.theta_star = posterior_mean(grid, ll);
    r.true_theta = study.theta_effective;
    r.n_periods = n_periods;
    r.err_mle_rescaled = n * (r.theta_hat - study.theta_effective);
    r.err_be_rescaled = n * (r.theta_star - study.theta_effective);
    r.seed = child;
    return r;
  });
  std::vector<double> em(replicates), eb(replicates);
  for (std::size_t i = 0; i < replicates; ++i) {
    em[i] = study.records[i].err_mle_rescaled;
    eb[i] = study.records[i].err_be_rescaled;
  }
  study.mle = error_moments(em);
  study.bayes = error_moments(eb);
  study.j = model.ou_type() ? j_theta_analytic(model, study.theta_effective)
                            : std::numeric_limits<double>::quiet_NaN();
  study.target_var_mle = kArgmaxVariance / (study.j * study.j);
  study.target_var_bayes = kPitmanVariance / (study.j * study.j);
  return study;
}

inline std::string mc_study_csv(const McStudy& study) {
  std::string out = "replicate,theta_hat,theta_star,err_mle_rescaled,err_be_rescaled\n";
  for (const auto& r : study.records) {
    out += std::to_string(r.replicate) + ',' + format_g17(r.theta_hat) + ',' + format_g17(r.theta_star) + ',' +
           format_g17(r.err_mle_rescaled) + ',' + format_g17(r.err_be_rescaled) + '\n';
  }
  return out;
}

}  // namespace phasediff
