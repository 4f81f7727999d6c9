#pragma once

// Invariant laws of the period-sampled chain, laws of large numbers for
// periodic functionals, the Ornstein-Uhlenbeck oscillating regime and a
// Fokker-Planck route to the periodic marginals when sigma is not constant.

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "phasediff/errors.hpp"
#include "phasediff/model.hpp"
#include "phasediff/quadrature.hpp"
#include "phasediff/simulate.hpp"
#include "phasediff/stats.hpp"

namespace phasediff {

// Observable f applied to the state: identity, square, 1{x < c}, or a
// registry coefficient function.
class Observable {
 public:
  enum class Kind { kIdentity, kSquare, kIndicatorBelow, kCoef, kInverseSquareCoef };

  static Observable identity() { return Observable(Kind::kIdentity); }
  static Observable square() { return Observable(Kind::kSquare); }
  static Observable indicator_below(double c) {
    Observable o(Kind::kIndicatorBelow);
    o.c_ = c;
    return o;
  }
  static Observable coef(const CoefFn& f) {
    Observable o(Kind::kCoef);
    o.coef_ = f;
    return o;
  }
  // x -> 1 / f(x)^2, e.g. 1/sigma^2.
  static Observable inverse_square(const CoefFn& f) {
    Observable o(Kind::kInverseSquareCoef);
    o.coef_ = f;
    return o;
  }
  static Observable parse(std::string_view text) {
    if (text == "identity") return identity();
    if (text == "square") return square();
    constexpr std::string_view kInverse = "inverse_square(";
    if (text.starts_with(kInverse) && text.ends_with(')'))
      return inverse_square(CoefFn::parse(text.substr(kInverse.size(), text.size() - kInverse.size() - 1)));
    const CallExpr call = parse_call(text);
    if (call.name == "indicator_below" && call.args.size() == 1) return indicator_below(call.args[0]);
    return coef(CoefFn::parse(text));
  }

  Kind kind() const noexcept { return kind_; }

  double operator()(double x) const {
    switch (kind_) {
      case Kind::kIdentity: return x;
      case Kind::kSquare: return x * x;
      case Kind::kIndicatorBelow: return x < c_ ? 1.0 : 0.0;
      case Kind::kCoef: return coef_(x);
      case Kind::kInverseSquareCoef: {
        const double s = coef_(x);
        return 1.0 / (s * s);
      }
    }
    return 0.0;
  }

  // E[f(X)], X ~ N(mean, variance).
  double gaussian_expectation(double mean, double variance) const {
    switch (kind_) {
      case Kind::kIdentity: return mean;
      case Kind::kSquare: return mean * mean + variance;
      case Kind::kIndicatorBelow: return 0.5 * std::erfc(-(c_ - mean) / std::sqrt(2.0 * variance));
      default: return quad::gaussian_expectation(*this, mean, variance);
    }
  }

 private:
  explicit Observable(Kind k) : kind_(k) {}
  Kind kind_;
  double c_ = 0.0;
  CoefFn coef_ = CoefFn::constant(1.0);
};

// --- Ornstein-Uhlenbeck oscillating regime ----------------------------------

// d xi = (S(t) + beta - gamma xi) dt + sigma0 dW. The beta offset of the
// affine drift is folded into the periodic input.
struct OUAnalytic {
  double gamma = 1.0;
  double sigma0 = 1.0;
  SignalSpec signal;
  double beta = 0.0;

  static OUAnalytic from_model(const DiffusionModel& model) {
    if (!model.ou_type()) throw DomainError("OU analytics need affine drift with gamma > 0");
    if (!model.constant_sigma()) throw DomainError("OU analytics need constant sigma");
    return {model.drift().p1(), model.sigma().p0(), model.signal(), model.drift().p0()};
  }

  double stationary_variance() const { return sigma0 * sigma0 / (2.0 * gamma); }

  // Phases in [0, T) where S jumps.
  std::vector<double> jumps() const { return {signal.theta(), signal.theta() + signal.duration()}; }
  double input(double t) const {
    return signal.at_phase(reduce_phase(t, signal.period()), signal.theta()) + beta;
  }
};

struct OUMoments {
  double mean = 0.0;
  double variance = 0.0;
};

namespace detail {

// Breakpoints v in [0, span] where v -> S(r - v) jumps.
inline std::vector<double> ou_breaks(const OUAnalytic& ou, double r, double span) {
  const double T = ou.signal.period();
  std::vector<double> out;
  for (double jump : ou.jumps()) {
    const double base = reduce_phase(r - jump, T);
    for (int k = 0; base + k * T <= span; ++k) out.push_back(base + k * T);
  }
  return out;
}

}  // namespace detail

namespace detail {

// int_lo^hi e^{-gamma v} S(r - v) dv over a piece on which the burst indicator
// is constant. The indicator is read at the midpoint so that breakpoints a few
// ulps off the true jump never leave a sliver for the quadrature to chase.
inline double ou_piece(const OUAnalytic& ou, double r, double lo, double hi) {
  const double T = ou.signal.period();
  const bool on = ou.signal.on_at_phase(reduce_phase(r - 0.5 * (lo + hi), T), ou.signal.theta());
  auto f = [&](double v) {
    const double t = r - v;
    double s = ou.signal.lambda()(t) + ou.beta;
    if (on) s += ou.signal.lambda_star()(t);
    return std::exp(-ou.gamma * v) * s;
  };
  return quad::integrate(f, lo, hi);
}

inline double ou_integral(const OUAnalytic& ou, double r, double span, std::vector<double> breaks) {
  breaks.push_back(0.0);
  breaks.push_back(span);
  std::sort(breaks.begin(), breaks.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double lo = std::max(0.0, breaks[i]);
    const double hi = std::min(span, breaks[i + 1]);
    if (hi > lo) total += ou_piece(ou, r, lo, hi);
  }
  return total;
}

}  // namespace detail

// M(r) = (1 / (1 - e^{-gamma T})) * int_0^T e^{-gamma v} S(r - v) dv: the
// one-period integral folded with the geometric series of later periods.
inline double ou_mean_folded(const OUAnalytic& ou, double r) {
  const double T = ou.signal.period();
  const double one_period = detail::ou_integral(ou, r, T, detail::ou_breaks(ou, r, T));
  return one_period / (1.0 - std::exp(-ou.gamma * T));
}

// M(r) = int_0^{horizon} e^{-gamma v} S(r - v) dv, integrated directly over
// every period up to the horizon (default 40 T).
inline double ou_mean_truncated(const OUAnalytic& ou, double r, double horizon_periods = 40.0) {
  const double T = ou.signal.period();
  const double span = horizon_periods * T;
  auto breaks = detail::ou_breaks(ou, r, span);
  for (int k = 1; k < horizon_periods; ++k) breaks.push_back(k * T);
  return detail::ou_integral(ou, r, span, std::move(breaks));
}

// Mean and variance of the periodic stationary law at phase r:
// N(M(r), sigma0^2 / (2 gamma)).
inline OUMoments ou_moments(const OUAnalytic& ou, double r) {
  if (!(ou.gamma > 0.0) || !(ou.sigma0 > 0.0)) throw DomainError("ou_moments: gamma, sigma0 must be positive");
  return {ou_mean_folded(ou, r), ou.stationary_variance()};
}

// --- Fokker-Planck route for non-constant sigma ------------------------------

// Periodic stationary marginals of an affine-drift diffusion with arbitrary
// registry sigma, from the forward equation
//   dp/dt = -d/dx[(S(t) + b(x)) p] + d^2/dx^2[(sigma^2(x)/2) p]
// discretized with finite volumes (zero-flux walls) and Crank-Nicolson steps,
// iterated over whole periods until the phase-0 density is periodic.
class PeriodicMarginals {
 public:
  struct Options {
    int cells = 2000;
    int steps_per_period = 4000;
    double width_sd = 10.0;
    double tolerance = 1e-13;
    int max_periods = 2000;
  };

  explicit PeriodicMarginals(const DiffusionModel& model) : PeriodicMarginals(model, Options{}) {}

  PeriodicMarginals(const DiffusionModel& model, Options opt) : model_(model), opt_(opt) {
    if (!model.ou_type()) throw DomainError("Fokker-Planck marginals need affine drift with gamma > 0");
    const double gamma = model.drift().p1();
    const double smax = model.sigma().max_value_as_sigma();
    // mean dynamics are linear, so the Gaussian-route means bracket the mass
    OUAnalytic ou{gamma, smax, model.signal(), model.drift().p0()};
    double lo = 1e300, hi = -1e300;
    const double T = model.period();
    for (int k = 0; k < 64; ++k) {
      const double m = ou_mean_folded(ou, T * k / 64.0);
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
    const double sd = smax / std::sqrt(2.0 * gamma);
    lo_ = lo - opt.width_sd * sd;
    h_ = (hi - lo + 2.0 * opt.width_sd * sd) / opt.cells;
    x_.resize(opt.cells);
    for (int i = 0; i < opt.cells; ++i) x_[i] = lo_ + (i + 0.5) * h_;
    d_.resize(opt.cells);
    for (int i = 0; i < opt.cells; ++i) {
      const double s = model.sigma()(x_[i]);
      d_[i] = 0.5 * s * s;
    }
    converge();
  }

  // Density values (per unit x) at phase r in [0, T).
  std::vector<double> density_at(double r) const {
    std::vector<double> p = p0_;
    const double T = model_.period();
    const double k = T / opt_.steps_per_period;
    double t = 0.0;
    while (t < r) {
      const double step = std::min(k, r - t);
      cn_step(p, t, step);
      t += step;
    }
    return p;
  }

  double expectation(const Observable& f, double r) const {
    const auto p = density_at(r);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += f(x_[i]) * p[i];
    return s * h_;
  }

  double expectation_inverse_sigma2(double r) const {
    return expectation(Observable::inverse_square(model_.sigma()), r);
  }

  const std::vector<double>& grid() const { return x_; }
  int periods_iterated() const { return periods_; }

 private:
  void converge() {
    const double T = model_.period();
    const double k = T / opt_.steps_per_period;
    // start from a Gaussian around the middle of the box
    p0_.assign(x_.size(), 0.0);
    const double mid = lo_ + 0.5 * h_ * opt_.cells;
    const double sd = 0.1 * h_ * opt_.cells;
    double mass = 0.0;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      p0_[i] = std::exp(-0.5 * (x_[i] - mid) * (x_[i] - mid) / (sd * sd));
      mass += p0_[i] * h_;
    }
    for (double& v : p0_) v /= mass;
    for (periods_ = 1; periods_ <= opt_.max_periods; ++periods_) {
      std::vector<double> p = p0_;
      for (int s = 0; s < opt_.steps_per_period; ++s) cn_step(p, s * k, k);
      double diff = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) diff = std::max(diff, std::abs(p[i] - p0_[i]));
      p0_ = std::move(p);
      if (diff * h_ < opt_.tolerance) return;
    }
    throw NumericError("Fokker-Planck periodic iteration did not converge");
  }

  // One Crank-Nicolson step of size k from time t; drift uses S at t + k/2.
  void cn_step(std::vector<double>& p, double t, double k) const {
    const int n = static_cast<int>(p.size());
    const double T = model_.period();
    const double s = model_.signal().at_phase(reduce_phase(t + 0.5 * k, T), model_.theta());
    // face coefficients: flux F_{i+1/2} = a_i p_i + c_i p_{i+1}
    std::vector<double> fa(n - 1), fc(n - 1);
    for (int i = 0; i + 1 < n; ++i) {
      const double xf = lo_ + (i + 1) * h_;
      const double mu = s + model_.drift()(xf);
      fa[i] = 0.5 * mu + d_[i] / h_;
      fc[i] = 0.5 * mu - d_[i + 1] / h_;
    }
    // dp_i/dt = -(F_{i+1/2} - F_{i-1/2}) / h = L_i p
    std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0);
    for (int i = 0; i < n; ++i) {
      if (i + 1 < n) {
        diag[i] -= fa[i] / h_;
        upper[i] -= fc[i] / h_;
      }
      if (i > 0) {
        lower[i] += fa[i - 1] / h_;
        diag[i] += fc[i - 1] / h_;
      }
    }
    std::vector<double> rhs(n);
    for (int i = 0; i < n; ++i) {
      double lp = diag[i] * p[i];
      if (i > 0) lp += lower[i] * p[i - 1];
      if (i + 1 < n) lp += upper[i] * p[i + 1];
      rhs[i] = p[i] + 0.5 * k * lp;
    }
    // (I - k/2 L) p' = rhs, Thomas algorithm
    std::vector<double> cp(n), dp(n);
    double b0 = 1.0 - 0.5 * k * diag[0];
    cp[0] = (-0.5 * k * upper[0]) / b0;
    dp[0] = rhs[0] / b0;
    for (int i = 1; i < n; ++i) {
      const double a = -0.5 * k * lower[i];
      const double b = 1.0 - 0.5 * k * diag[i] - a * cp[i - 1];
      cp[i] = (i + 1 < n) ? (-0.5 * k * upper[i]) / b : 0.0;
      dp[i] = (rhs[i] - a * dp[i - 1]) / b;
    }
    p[n - 1] = dp[n - 1];
    for (int i = n - 2; i >= 0; --i) p[i] = dp[i] - cp[i] * p[i + 1];
  }

  DiffusionModel model_;
  Options opt_;
  double lo_ = 0.0;
  double h_ = 0.0;
  std::vector<double> x_;
  std::vector<double> d_;
  std::vector<double> p0_;
  int periods_ = 0;
};

// (mu P_{0,r})(f): closed-form Gaussian marginal when sigma is constant,
// Fokker-Planck marginal otherwise. Affine drift with gamma > 0 only.
inline double stationary_expectation(const DiffusionModel& model, const Observable& f, double r) {
  if (model.constant_sigma()) {
    const auto m = ou_moments(OUAnalytic::from_model(model), r);
    return f.gaussian_expectation(m.mean, m.variance);
  }
  return PeriodicMarginals(model).expectation(f, r);
}

// --- empirical laws ------------------------------------------------------------

struct EmpiricalLaw {
  std::vector<double> samples;
  stats::Summary summary;
  // 5%, 25%, 50%, 75%, 95%
  std::vector<double> quantiles;
};

// Empirical law of the sampled chain after dropping burn_in leading samples.
inline EmpiricalLaw empirical_invariant(std::span<const double> chain, std::size_t burn_in) {
  if (chain.size() < burn_in + 100)
    throw DomainError("empirical_invariant: need at least 100 post-burn-in samples");
  EmpiricalLaw law;
  law.samples.assign(chain.begin() + static_cast<std::ptrdiff_t>(burn_in), chain.end());
  law.summary = stats::summarize(law.samples);
  for (double q : {0.05, 0.25, 0.5, 0.75, 0.95}) law.quantiles.push_back(stats::quantile(law.samples, q));
  return law;
}

// --- laws of large numbers for periodic functionals ----------------------------

struct PointSample {
  double r;
};
struct IntervalIntegral {
  double r;
  double r_end;
};
// Lambda_T = sum_k eps_{kT + r}, evaluated as an integral against a periodic
// measure with one atom.
struct DiracComb {
  double r;
};
using Functional = std::variant<PointSample, IntervalIntegral, DiracComb>;

inline Functional parse_functional(std::string_view kind, double r, double r_end) {
  if (kind == "point_sample") return PointSample{r};
  if (kind == "interval_integral") return IntervalIntegral{r, r_end};
  if (kind == "dirac_comb") return DiracComb{r};
  throw DomainError("unknown functional kind '" + std::string(kind) + "'");
}

struct LlnResult {
  std::vector<double> times;            // t = kT, k = 1..n
  std::vector<double> running_average;  // A_t / t
  double terminal = 0.0;
  // SE of the terminal average from the per-period contributions F_k.
  double terminal_se = 0.0;
  // (1/T) (mu P_{0,r})(f) or (1/T) int_r^r' (mu P_{0,s})(f) ds; NaN when no
  // oracle is available for the model.
  double theoretical_limit = std::nan("");
};

namespace detail {

// Overlap of [t, t + dt] with the window (r, r_end) taken modulo T, with t
// given by its phase.
inline double window_overlap(double phase, double dt, double r, double r_end, double T) {
  double total = 0.0;
  for (double shift : {-T, 0.0, T}) {
    const double lo = std::max(phase, r + shift);
    const double hi = std::min(phase + dt, r_end + shift);
    if (hi > lo) total += hi - lo;
  }
  return total;
}

}  // namespace detail

// Running averages A_t / t at the period ends of a whole-period path, where
// A_t = int_0^t f(xi_s) Lambda_T(ds). Interval integrals are left-point sums
// with each step weighted by its exact overlap with the window.
inline LlnResult lln_functional(const PathGrid& path, const Functional& functional,
                                const Observable& f) {
  SegmentChain chain(path);
  const std::size_t n = chain.count();
  if (n < 50) throw DomainError("lln_functional: need at least 50 periods");
  const double T = path.model.period();
  const double dt = path.dt();
  const int N = path.steps_per_period;
  std::vector<double> per_period(n, 0.0);

  auto grid_index = [&](double r) {
    const double idx = r / dt;
    const auto p = static_cast<int>(std::llround(idx));
    if (std::abs(idx - p) > 1e-9 || p < 0 || p > N) throw DomainError("phase r is not a grid point");
    return p;
  };

  if (const auto* ps = std::get_if<PointSample>(&functional)) {
    const int p = grid_index(ps->r);
    for (std::size_t k = 0; k < n; ++k) per_period[k] = f(chain[k][p]);
  } else if (const auto* dc = std::get_if<DiracComb>(&functional)) {
    // integrate f against the atom: weight 1 at the grid phase carrying it
    const int p = grid_index(dc->r);
    std::vector<double> atom(static_cast<std::size_t>(N) + 1, 0.0);
    atom[p] = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto seg = chain[k];
      double acc = 0.0;
      for (int i = 0; i < N; ++i) acc += atom[i] * f(seg[i]);
      per_period[k] = acc;
    }
  } else {
    const auto& iv = std::get<IntervalIntegral>(functional);
    if (!(0.0 <= iv.r && iv.r < iv.r_end && iv.r_end <= T))
      throw DomainError("interval_integral: need 0 <= r < r' <= T");
    std::vector<double> weight(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) weight[i] = detail::window_overlap(i * dt, dt, iv.r, iv.r_end, T);
    for (std::size_t k = 0; k < n; ++k) {
      const auto seg = chain[k];
      double acc = 0.0;
      for (int i = 0; i < N; ++i)
        if (weight[i] > 0.0) acc += weight[i] * f(seg[i]);
      per_period[k] = acc;
    }
  }

  LlnResult out;
  out.times.resize(n);
  out.running_average.resize(n);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += per_period[k];
    out.times[k] = static_cast<double>(k + 1) * T;
    out.running_average[k] = acc / out.times[k];
  }
  out.terminal = out.running_average.back();
  out.terminal_se = std::sqrt(stats::variance(per_period) / static_cast<double>(n)) / T;

  if (path.model.ou_type() && path.model.constant_sigma()) {
    const auto ou = OUAnalytic::from_model(path.model);
    auto marginal = [&](double s) {
      const auto m = ou_moments(ou, s);
      return f.gaussian_expectation(m.mean, m.variance);
    };
    if (const auto* ps = std::get_if<PointSample>(&functional)) {
      out.theoretical_limit = marginal(ps->r) / T;
    } else if (const auto* dc = std::get_if<DiracComb>(&functional)) {
      out.theoretical_limit = marginal(dc->r) / T;
    } else {
      const auto& iv = std::get<IntervalIntegral>(functional);
      out.theoretical_limit =
          quad::integrate_pieces(marginal, iv.r, iv.r_end, ou.jumps(), 1e-10) / T;
    }
  }
  return out;
}

}  // namespace phasediff
