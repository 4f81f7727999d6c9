#pragma once

// Girsanov log-likelihood ratios of the phase parameter computed from an
// observed grid path, local likelihood curves, and Monte Carlo checks of the
// Hellinger geometry, the bracket approximation and the martingale CLT that
// underlie the local limit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "phasediff/ergodic.hpp"
#include "phasediff/errors.hpp"
#include "phasediff/model.hpp"
#include "phasediff/parallel.hpp"
#include "phasediff/rng.hpp"
#include "phasediff/simulate.hpp"
#include "phasediff/stats.hpp"

namespace phasediff {

// dB_i = (xi_{i+1} - xi_i - [S(zeta, t_i) + b(xi_i)] dt) / sigma(xi_i).
inline std::vector<double> recover_increments(const PathGrid& path, const DiffusionModel& model,
                                              double zeta) {
  if (!model.signal().in_parameter_space(zeta)) throw DomainError("recover_increments: zeta outside Theta");
  const auto table = detail::signal_table(model.signal(), path.steps_per_period, zeta);
  const double dt = path.dt();
  std::vector<double> db(path.steps());
  int p = path.phase_index(0);
  for (std::size_t i = 0; i < db.size(); ++i) {
    const double x = path.values[i];
    db[i] = (path.values[i + 1] - x - (table[p] + model.drift()(x)) * dt) / model.sigma()(x);
    if (++p == path.steps_per_period) p = 0;
  }
  return db;
}

// log L^{zeta'/zeta}_t = sum delta_i dB_i - 1/2 sum delta_i^2 dt, with
// delta_i = (S(zeta', t_i) - S(zeta, t_i)) / sigma(xi_i), integrands at the left
// endpoint and dB recovered under zeta. This is the exact log-ratio of the
// Euler transition densities, so it composes exactly: for any reference
// points, log_lr(z2, z0) = log_lr(z2, z1) + log_lr(z1, z0) up to rounding.
inline double log_lr(const PathGrid& path, const DiffusionModel& model, double zeta_prime,
                     double zeta) {
  const SignalSpec& sig = model.signal();
  if (!sig.in_parameter_space(zeta) || !sig.in_parameter_space(zeta_prime))
    throw DomainError("log_lr: parameters outside Theta");
  if (zeta_prime == zeta) return 0.0;
  const int N = path.steps_per_period;
  const auto s_ref = detail::signal_table(sig, N, zeta);
  const auto s_alt = detail::signal_table(sig, N, zeta_prime);
  const double dt = path.dt();
  double mart = 0.0, comp = 0.0;
  int p = path.phase_index(0);
  for (std::size_t i = 0; i + 1 < path.values.size(); ++i) {
    const double diff = s_alt[p] - s_ref[p];
    if (diff != 0.0) {
      const double x = path.values[i];
      const double sigma = model.sigma()(x);
      const double db = (path.values[i + 1] - x - (s_ref[p] + model.drift()(x)) * dt) / sigma;
      const double delta = diff / sigma;
      mart += delta * db;
      comp += delta * delta * dt;
    }
    if (++p == N) p = 0;
  }
  return mart - 0.5 * comp;
}

// Per-phase sufficient statistics of a path for the phase parameter.
//
// With R_i = xi_{i+1} - xi_i - (lambda(t_i) + b(xi_i)) dt and phase index p,
//   c_p = sum_{i : phase(i) = p} [lambda*_p R_i - lambda*_p^2 dt / 2] / sigma(xi_i)^2
// and g(zeta) = sum_{p : zeta < p dt < zeta + a} c_p is the log-likelihood of zeta
// against the burst-free drift. log_lr(zeta', zeta) = g(zeta') - g(zeta) exactly
// (algebraically), so a whole likelihood curve costs one pass over the path.
class PhaseStatistics {
 public:
  PhaseStatistics(const PathGrid& path, const DiffusionModel& model)
      : signal_(model.signal()), steps_per_period_(path.steps_per_period), dt_(path.dt()) {
    const int N = path.steps_per_period;
    std::vector<double> lam(N), lam_star(N);
    for (int p = 0; p < N; ++p) {
      lam[p] = signal_.lambda().at_phase(p * dt_);
      lam_star[p] = signal_.lambda_star().at_phase(p * dt_);
    }
    std::vector<double> c(N, 0.0);
    int p = path.phase_index(0);
    for (std::size_t i = 0; i + 1 < path.values.size(); ++i) {
      const double x = path.values[i];
      const double s = model.sigma()(x);
      const double r = path.values[i + 1] - x - (lam[p] + model.drift()(x)) * dt_;
      c[p] += (lam_star[p] * r - 0.5 * lam_star[p] * lam_star[p] * dt_) / (s * s);
      if (++p == N) p = 0;
    }
    prefix_.assign(static_cast<std::size_t>(N) + 1, 0.0);
    for (int q = 0; q < N; ++q) prefix_[q + 1] = prefix_[q] + c[q];
  }

  // g(zeta); zeta must be in the closure of Theta.
  double log_likelihood(double zeta) const {
    const double a = signal_.duration();
    const int N = steps_per_period_;
    // first p with p dt > zeta, first p with p dt >= zeta + a, using the same
    // comparisons as SignalSpec::on_at_phase
    int lo = std::clamp(static_cast<int>(std::floor(zeta / dt_)), 0, N);
    while (lo < N && !(lo * dt_ > zeta)) ++lo;
    while (lo > 0 && (lo - 1) * dt_ > zeta) --lo;
    int hi = std::clamp(static_cast<int>(std::floor((zeta + a) / dt_)), 0, N);
    while (hi < N && hi * dt_ < zeta + a) ++hi;
    while (hi > 0 && !((hi - 1) * dt_ < zeta + a)) --hi;
    if (hi <= lo) return 0.0;
    return prefix_[hi] - prefix_[lo];
  }

  double log_lr(double zeta_prime, double zeta) const {
    if (zeta_prime == zeta) return 0.0;
    return log_likelihood(zeta_prime) - log_likelihood(zeta);
  }

 private:
  SignalSpec signal_;
  int steps_per_period_;
  double dt_;
  std::vector<double> prefix_;
};

enum class CurveMode { kGlobalZeta, kLocalU };

struct CurvePoint {
  double parameter = 0.0;
  double log_lr = 0.0;
  // false when the point lies outside the parameter space; log_lr is then 0
  bool valid = true;
};

struct LikelihoodCurve {
  double reference = 0.0;
  CurveMode mode = CurveMode::kGlobalZeta;
  std::size_t n_periods = 0;
  std::vector<CurvePoint> points;
  std::size_t excluded = 0;
};

// Default local grid: 801 points spanning [-40, 40].
inline std::vector<double> default_u_grid(double span = 40.0, std::size_t points = 801) {
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = -span + 2.0 * span * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

// log Z_{n,theta}(u) = log L_{nT}^{(theta + u/n)/theta} over u_grid, with n the
// number of whole periods in the path. Points with theta + u/n outside Theta
// are flagged invalid.
inline LikelihoodCurve local_curve(const PathGrid& path, const DiffusionModel& model, double theta,
                                   std::span<const double> u_grid) {
  if (!model.signal().in_parameter_space(theta)) throw DomainError("local_curve: theta outside Theta");
  if (!path.whole_periods()) throw DomainError("local_curve: path must cover whole periods");
  const PhaseStatistics stats(path, model);
  LikelihoodCurve curve{theta, CurveMode::kLocalU, path.n_periods(), {}, 0};
  const double n = static_cast<double>(curve.n_periods);
  const double base = stats.log_likelihood(theta);
  for (double u : u_grid) {
    const double zeta = theta + u / n;
    CurvePoint pt{u, 0.0, model.signal().in_parameter_space(zeta)};
    if (pt.valid) {
      pt.log_lr = (u == 0.0) ? 0.0 : stats.log_likelihood(zeta) - base;
    } else {
      ++curve.excluded;
    }
    curve.points.push_back(pt);
  }
  return curve;
}

inline LikelihoodCurve global_curve(const PathGrid& path, const DiffusionModel& model,
                                    double reference, std::span<const double> zeta_grid) {
  if (!model.signal().in_closure(reference)) throw DomainError("global_curve: reference outside Theta");
  const PhaseStatistics stats(path, model);
  LikelihoodCurve curve{reference, CurveMode::kGlobalZeta, path.n_periods(), {}, 0};
  const double base = stats.log_likelihood(reference);
  for (double z : zeta_grid) {
    CurvePoint pt{z, 0.0, model.signal().in_closure(z)};
    if (pt.valid) pt.log_lr = (z == reference) ? 0.0 : stats.log_likelihood(z) - base;
    else ++curve.excluded;
    curve.points.push_back(pt);
  }
  return curve;
}

// --- Hellinger geometry ---------------------------------------------------

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

struct HellingerReport {
  Estimate one_minus_sqrt_sq;     // E[(1 - L^{1/2})^2]
  Estimate one_minus_quarter_4;   // E[(1 - L^{1/4})^4]
  Estimate sqrt_l;                // E[L^{1/2}]
  Estimate l;                     // E[L], 1 under the reference law
  // closed forms of the limit experiment at x = J n |zeta' - zeta|
  double scaled_distance = 0.0;
  double limit_one_minus_sqrt_sq = 0.0;
  double limit_one_minus_quarter_4 = 0.0;
  double limit_sqrt_l = 0.0;
};

// Closed forms for L = exp(W(x) - x/2), W(x) ~ N(0, x):
//   E[(1 - sqrt L)^2] = 2(1 - e^{-x/8}),  E[sqrt L] = e^{-x/8},
//   E[(1 - L^{1/4})^4] = 2 + 6 e^{-x/8} - 8 e^{-3x/32}.
inline double hellinger_closed_sq(double x) { return 2.0 * (1.0 - std::exp(-x / 8.0)); }
inline double hellinger_closed_sqrt(double x) { return std::exp(-x / 8.0); }
inline double hellinger_closed_quarter(double x) {
  return 2.0 + 6.0 * std::exp(-x / 8.0) - 8.0 * std::exp(-3.0 * x / 32.0);
}

namespace detail {

inline Estimate mean_estimate(const std::vector<double>& v) {
  const auto s = stats::summarize(v);
  return {s.mean, s.se_mean};
}

}  // namespace detail

struct SimulationOptions {
  int steps_per_period = 1000;
  // 0 selects default_burn_in(model)
  std::size_t burn_in_periods = 0;
};

inline std::size_t burn_in_for(const DiffusionModel& m, const SimulationOptions& o) {
  return o.burn_in_periods ? o.burn_in_periods : default_burn_in(m);
}

// Monte Carlo under zeta of the Hellinger-type moments of L_{nT}^{zeta'/zeta}.
// scaling_j, when positive, sets J for the limit closed forms.
inline HellingerReport hellinger_mc(const DiffusionModel& model, double zeta, double zeta_prime,
                                    std::size_t n_periods, std::size_t replicates,
                                    std::uint64_t seed, double scaling_j,
                                    const SimulationOptions& opt = {}) {
  const SignalSpec& sig = model.signal();
  if (!sig.in_parameter_space(zeta) || !sig.in_parameter_space(zeta_prime))
    throw DomainError("hellinger_mc: parameters outside Theta");
  if (std::abs(zeta_prime - zeta) >= sig.duration())
    throw DomainError("hellinger_mc: need |zeta' - zeta| < a");
  if (replicates < 2) throw DomainError("hellinger_mc: need at least two replicates");
  const DiffusionModel truth = model.with_theta(zeta);
  const std::size_t burn = burn_in_for(truth, opt);
  struct Row {
    double sq, q4, sq_l, l;
  };
  const auto rows = map_replicates<Row>(replicates, [&](std::size_t i) {
    const auto path = simulate_stationary(truth, n_periods, opt.steps_per_period, seed_stream(seed, i), burn);
    const double ll = log_lr(path, truth, zeta_prime, zeta);
    const double l = std::exp(ll);
    const double half = std::exp(0.5 * ll);
    const double quarter = std::exp(0.25 * ll);
    return Row{(1.0 - half) * (1.0 - half), std::pow(1.0 - quarter, 4), half, l};
  });
  std::vector<double> a(replicates), b(replicates), c(replicates), d(replicates);
  for (std::size_t i = 0; i < replicates; ++i) {
    a[i] = rows[i].sq;
    b[i] = rows[i].q4;
    c[i] = rows[i].sq_l;
    d[i] = rows[i].l;
  }
  HellingerReport rep;
  rep.one_minus_sqrt_sq = detail::mean_estimate(a);
  rep.one_minus_quarter_4 = detail::mean_estimate(b);
  rep.sqrt_l = detail::mean_estimate(c);
  rep.l = detail::mean_estimate(d);
  rep.scaled_distance = scaling_j * static_cast<double>(n_periods) * std::abs(zeta_prime - zeta);
  rep.limit_one_minus_sqrt_sq = hellinger_closed_sq(rep.scaled_distance);
  rep.limit_one_minus_quarter_4 = hellinger_closed_quarter(rep.scaled_distance);
  rep.limit_sqrt_l = hellinger_closed_sqrt(rep.scaled_distance);
  return rep;
}

// --- bracket approximation ------------------------------------------------

// Phase window of the local martingales: (r, r + h/n) for h > 0 and
// (r - |h|/n, r) for h < 0.
struct PhaseWindow {
  double lo = 0.0;
  double hi = 0.0;

  static PhaseWindow around(double r, double h, std::size_t n) {
    const double w = std::abs(h) / static_cast<double>(n);
    return h > 0.0 ? PhaseWindow{r, r + w} : PhaseWindow{r - w, r};
  }
  double width() const { return hi - lo; }
};

// (phase index, overlap length) for every grid step meeting the window.
inline std::vector<std::pair<int, double>> window_steps(const PhaseWindow& w, double dt, int N) {
  std::vector<std::pair<int, double>> out;
  const int first = std::max(0, static_cast<int>(std::floor(w.lo / dt)) - 1);
  const int last = std::min(N - 1, static_cast<int>(std::ceil(w.hi / dt)) + 1);
  for (int p = first; p <= last; ++p) {
    const double ov = std::min(w.hi, (p + 1) * dt) - std::max(w.lo, p * dt);
    if (ov > 0.0) out.emplace_back(p, ov);
  }
  return out;
}

struct BracketResult {
  double lhs = 0.0;    // int_0^{nT} sigma^{-2}(xi_s) 1_window(s mod T) ds
  double rhs = 0.0;    // |h| (1/n) sum_j sigma^{-2}(xi_{jT + r})
  double limit = 0.0;  // |h| (mu P_{0,r})(1/sigma^2)
  bool underresolved = false;
};

// lhs uses the trapezoid rule per grid step, weighted by the step's exact
// overlap with the window.
inline BracketResult bracket_from_path(const PathGrid& path, double r, double h, double gamma_r) {
  const std::size_t n = path.n_periods();
  const double T = path.model.period();
  const int N = path.steps_per_period;
  const double dt = path.dt();
  if (!(r > 0.0 && r < T)) throw DomainError("bracket: need 0 < r < T");
  if (h == 0.0) throw DomainError("bracket: h must be nonzero");
  if (!(std::abs(h) / static_cast<double>(n) < std::min(r, T - r)))
    throw DomainError("bracket: need |h|/n < min(r, T - r)");
  const auto pr = std::llround(r / dt);
  if (std::abs(r / dt - static_cast<double>(pr)) > 1e-9) throw DomainError("bracket: r must be a grid phase");
  const PhaseWindow w = PhaseWindow::around(r, h, n);
  const auto steps = window_steps(w, dt, N);
  BracketResult out;
  out.underresolved = w.width() < 4.0 * dt;
  auto inv2 = [&](double x) {
    const double s = path.model.sigma()(x);
    return 1.0 / (s * s);
  };
  SegmentChain chain(path);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto seg = chain[k];
    for (const auto& [p, ov] : steps) lhs += ov * 0.5 * (inv2(seg[p]) + inv2(seg[p + 1]));
    rhs += inv2(seg[static_cast<std::size_t>(pr)]);
  }
  out.lhs = lhs;
  out.rhs = std::abs(h) * rhs / static_cast<double>(n);
  out.limit = std::abs(h) * gamma_r;
  return out;
}

// (mu P_{0,r})(1/sigma^2) from the deterministic oracles (affine drift), or
// from a long stationary run of long_run_periods otherwise.
inline double inverse_sigma2_marginal(const DiffusionModel& model, double r, int steps_per_period,
                                      std::uint64_t seed, std::size_t long_run_periods = 20000) {
  const Observable f = Observable::inverse_square(model.sigma());
  if (model.ou_type()) return stationary_expectation(model, f, r);
  const auto path = simulate_stationary(model, long_run_periods, steps_per_period, seed, default_burn_in(model));
  const auto xs = sample_at_phase(path, r);
  double s = 0.0;
  for (double x : xs) s += f(x);
  return s / static_cast<double>(xs.size());
}

inline BracketResult bracket_check(const DiffusionModel& model, double r, double h, std::size_t n,
                                   std::uint64_t seed, const SimulationOptions& opt = {}) {
  const auto path = simulate_stationary(model, n, opt.steps_per_period, seed, burn_in_for(model, opt));
  const double gamma_r = inverse_sigma2_marginal(model, r, opt.steps_per_period, seed_stream(seed, 1));
  return bracket_from_path(path, r, h, gamma_r);
}

// --- martingale CLT -------------------------------------------------------

struct MartingaleClt {
  std::vector<double> r_points;
  std::vector<double> h_points;
  std::vector<double> gamma;  // Gamma_j = (mu P_{0,r_j})(1/sigma^2)
  std::size_t dim = 0;        // l * m, entry (j, i) at j * m + i
  std::vector<double> empirical;   // dim x dim, row-major
  std::vector<double> standard_error;
  std::vector<double> target;      // block diagonal A Gamma_j
  bool underresolved = false;
  std::size_t replicates = 0;
};

// A_{i,i'} = h_i ^ h_i' for same-sign h, 0 otherwise.
inline double bm_kernel(double h1, double h2) {
  if (h1 > 0.0 && h2 > 0.0) return std::min(h1, h2);
  if (h1 < 0.0 && h2 < 0.0) return std::min(-h1, -h2);
  return 0.0;
}

// Y^{n,r,h}_T = sum_i sigma^{-1}(xi_{t_i}) w_i dB_i over a stationary path of n
// periods, with w_i the exact overlap of step i with the window, for every
// (r_j, h_i) pair; returns the empirical covariance against the target.
inline MartingaleClt martingale_clt_check(const DiffusionModel& model, std::vector<double> r_points,
                                          std::vector<double> h_points, std::size_t n,
                                          std::size_t replicates, std::uint64_t seed,
                                          const SimulationOptions& opt = {}) {
  const double T = model.period();
  std::sort(r_points.begin(), r_points.end());
  if (r_points.empty() || h_points.empty()) throw DomainError("clt: need r and h points");
  for (double r : r_points)
    if (!(r > 0.0 && r < T)) throw DomainError("clt: r points must lie in (0, T)");
  for (double h : h_points)
    if (h == 0.0) throw DomainError("clt: h points must be nonzero");
  double spacing = r_points.front();
  for (std::size_t j = 0; j + 1 < r_points.size(); ++j) spacing = std::min(spacing, r_points[j + 1] - r_points[j]);
  spacing = std::min(spacing, T - r_points.back());
  double hmax = 0.0;
  for (double h : h_points) hmax = std::max(hmax, std::abs(h));
  if (!(hmax / static_cast<double>(n) < spacing)) throw DomainError("clt: need max|h|/n below the r spacing");
  if (replicates < 2) throw DomainError("clt: need at least two replicates");

  MartingaleClt out;
  out.r_points = r_points;
  out.h_points = h_points;
  out.replicates = replicates;
  const std::size_t l = r_points.size(), m = h_points.size();
  out.dim = l * m;
  const int N = opt.steps_per_period;
  const double dt = T / N;
  std::vector<std::vector<std::pair<int, double>>> windows;
  for (double r : r_points)
    for (double h : h_points) {
      const auto w = PhaseWindow::around(r, h, n);
      if (w.width() < 4.0 * dt) out.underresolved = true;
      windows.push_back(window_steps(w, dt, N));
    }
  const std::size_t burn = burn_in_for(model, opt);
  const auto ys = map_replicates<std::vector<double>>(replicates, [&](std::size_t rep) {
    const auto path = simulate_stationary(model, n, N, seed_stream(seed, rep), burn);
    const auto db = recover_increments(path, model, model.theta());
    std::vector<double> y(out.dim, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t base = k * static_cast<std::size_t>(N);
      for (std::size_t e = 0; e < out.dim; ++e) {
        double acc = 0.0;
        for (const auto& [p, ov] : windows[e]) {
          const std::size_t i = base + static_cast<std::size_t>(p);
          acc += (ov / dt) * db[i] / model.sigma()(path.values[i]);
        }
        y[e] += acc;
      }
    }
    return y;
  });
  std::vector<std::vector<double>> cols(out.dim, std::vector<double>(replicates));
  for (std::size_t rep = 0; rep < replicates; ++rep)
    for (std::size_t e = 0; e < out.dim; ++e) cols[e][rep] = ys[rep][e];
  out.empirical.assign(out.dim * out.dim, 0.0);
  out.standard_error.assign(out.dim * out.dim, 0.0);
  out.target.assign(out.dim * out.dim, 0.0);
  for (double r : r_points) out.gamma.push_back(inverse_sigma2_marginal(model, r, N, seed_stream(seed, replicates)));
  for (std::size_t e1 = 0; e1 < out.dim; ++e1)
    for (std::size_t e2 = 0; e2 < out.dim; ++e2) {
      out.empirical[e1 * out.dim + e2] = stats::covariance(cols[e1], cols[e2]);
      out.standard_error[e1 * out.dim + e2] = stats::covariance_se(cols[e1], cols[e2]);
      const std::size_t j1 = e1 / m, j2 = e2 / m;
      if (j1 == j2)
        out.target[e1 * out.dim + e2] = bm_kernel(h_points[e1 % m], h_points[e2 % m]) * out.gamma[j1];
    }
  return out;
}

}  // namespace phasediff
