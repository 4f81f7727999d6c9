#pragma once

// The periodic signal, the coefficient registry and exact occupation-time
// arithmetic for periodic indicator integrands.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phasediff/errors.hpp"

namespace phasediff {

// t modulo period, in [0, period).
inline double reduce_phase(double t, double period) {
  double r = t - period * std::floor(t / period);
  if (r >= period) r -= period;
  if (r < 0.0) r = 0.0;
  return r;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// A call expression such as "sinusoid(1, 0.5, 0)" split into name and
// numeric arguments.
struct CallExpr {
  std::string name;
  std::vector<double> args;
};

inline CallExpr parse_call(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  const auto open = text.find('(');
  if (open == std::string_view::npos || text.back() != ')')
    throw DomainError("expected name(args...), got '" + std::string(text) + "'");
  CallExpr call{std::string(trim(text.substr(0, open))), {}};
  std::string_view inner = text.substr(open + 1, text.size() - open - 2);
  while (!trim(inner).empty()) {
    const auto comma = inner.find(',');
    std::string_view item = trim(inner.substr(0, comma));
    double v = 0.0;
    if (!item.empty() && item.front() == '+') item.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size())
      throw DomainError("bad number '" + std::string(item) + "' in '" + std::string(text) + "'");
    call.args.push_back(v);
    if (comma == std::string_view::npos) break;
    inner.remove_prefix(comma + 1);
  }
  return call;
}

// A T-periodic input function: constant(c) or sinusoid(c0, c1, phase).
class PeriodicFn {
 public:
  enum class Kind { kConstant, kSinusoid };

  static PeriodicFn constant(double c, double period) {
    return PeriodicFn(Kind::kConstant, c, 0.0, 0.0, period);
  }
  static PeriodicFn sinusoid(double c0, double c1, double phase, double period) {
    return PeriodicFn(Kind::kSinusoid, c0, c1, phase, period);
  }
  static PeriodicFn parse(std::string_view text, double period) {
    const CallExpr call = parse_call(text);
    if (call.name == "constant" && call.args.size() == 1) return constant(call.args[0], period);
    if (call.name == "sinusoid" && call.args.size() == 3)
      return sinusoid(call.args[0], call.args[1], call.args[2], period);
    throw DomainError("unknown periodic function '" + std::string(text) + "'");
  }

  Kind kind() const noexcept { return kind_; }
  double period() const noexcept { return period_; }

  double operator()(double t) const { return at_phase(reduce_phase(t, period_)); }

  // Value at a phase already reduced to [0, period).
  double at_phase(double phase) const {
    if (kind_ == Kind::kConstant) return c0_;
    return c0_ + c1_ * std::sin(2.0 * std::numbers::pi * phase / period_ + shift_);
  }

  double min_value() const { return kind_ == Kind::kConstant ? c0_ : c0_ - std::abs(c1_); }
  double max_value() const { return kind_ == Kind::kConstant ? c0_ : c0_ + std::abs(c1_); }
  bool is_zero() const { return c0_ == 0.0 && (kind_ == Kind::kConstant || c1_ == 0.0); }

  std::string describe() const {
    if (kind_ == Kind::kConstant) return "constant(" + format_g17(c0_) + ")";
    return "sinusoid(" + format_g17(c0_) + "," + format_g17(c1_) + "," + format_g17(shift_) + ")";
  }

 private:
  PeriodicFn(Kind kind, double c0, double c1, double shift, double period)
      : kind_(kind), c0_(c0), c1_(c1), shift_(shift), period_(period) {
    if (!(period > 0.0) || !std::isfinite(period)) throw DomainError("period must be positive");
    if (!std::isfinite(c0) || !std::isfinite(c1) || !std::isfinite(shift))
      throw DomainError("periodic function coefficients must be finite");
  }

  Kind kind_;
  double c0_, c1_, shift_, period_;
};

// S(theta, t) = lambda(t) + lambda_star(t) * 1_{(theta, theta + a)}(t mod T).
//
// lambda_star >= 0 is accepted so that signal-free reference models can be
// built; estimation requires it strictly positive (see identifiable()).
class SignalSpec {
 public:
  SignalSpec(PeriodicFn lambda, PeriodicFn lambda_star, double period, double duration,
             double theta)
      : lambda_(lambda), lambda_star_(lambda_star), period_(period), duration_(duration),
        theta_(theta) {
    if (!(period > 0.0) || !std::isfinite(period)) throw DomainError("T must be positive");
    if (!(duration > 0.0 && duration < period))
      throw DomainError("signal duration violates 0 < a < T");
    if (lambda.period() != period || lambda_star.period() != period)
      throw DomainError("lambda and lambda_star must share the period T");
    if (lambda.min_value() < 0.0) throw DomainError("lambda must be nonnegative");
    if (lambda_star.min_value() < 0.0) throw DomainError("lambda_star must be nonnegative");
    if (!in_parameter_space(theta)) throw DomainError("theta outside Theta = (0, T - a)");
  }

  const PeriodicFn& lambda() const noexcept { return lambda_; }
  const PeriodicFn& lambda_star() const noexcept { return lambda_star_; }
  double period() const noexcept { return period_; }
  double duration() const noexcept { return duration_; }
  double theta() const noexcept { return theta_; }
  double theta_max() const noexcept { return period_ - duration_; }

  bool in_parameter_space(double zeta) const { return zeta > 0.0 && zeta < period_ - duration_; }
  bool in_closure(double zeta) const { return zeta >= 0.0 && zeta <= period_ - duration_; }
  bool identifiable() const { return lambda_star_.min_value() > 0.0; }

  SignalSpec with_theta(double theta) const {
    return SignalSpec(lambda_, lambda_star_, period_, duration_, theta);
  }

  // Open-interval indicator: a phase exactly at zeta or zeta + a is "off".
  bool on_at_phase(double phase, double zeta) const {
    return phase > zeta && phase < zeta + duration_;
  }

  double at_phase(double phase, double zeta) const {
    const double base = lambda_.at_phase(phase);
    return on_at_phase(phase, zeta) ? base + lambda_star_.at_phase(phase) : base;
  }

 private:
  PeriodicFn lambda_;
  PeriodicFn lambda_star_;
  double period_;
  double duration_;
  double theta_;
};

// S(theta, t); theta_override, when given, replaces the spec's theta and must
// lie in Theta.
inline double signal_value(const SignalSpec& spec, double t,
                           std::optional<double> theta_override = std::nullopt) {
  if (t < 0.0) throw DomainError("signal_value: t must be nonnegative");
  const double zeta = theta_override.value_or(spec.theta());
  if (theta_override && !spec.in_parameter_space(zeta))
    throw DomainError("signal_value: theta outside Theta");
  return spec.at_phase(reduce_phase(t, spec.period()), zeta);
}

// Lebesgue measure of {s in [0, t] : s mod T in (r1, r2)}, in closed form.
inline double occupation_measure(double period, double r1, double r2, double t) {
  if (!(period > 0.0)) throw DomainError("occupation_measure: T must be positive");
  if (!(0.0 <= r1 && r1 < r2 && r2 <= period))
    throw DomainError("occupation_measure: need 0 <= r1 < r2 <= T");
  if (t < 0.0) throw DomainError("occupation_measure: t must be nonnegative");
  const double full = std::floor(t / period);
  const double rem = t - full * period;
  return full * (r2 - r1) + std::clamp(rem - r1, 0.0, r2 - r1);
}

// Closed coefficient registry with certifiable Lipschitz and (H2) constants.
class CoefFn {
 public:
  enum class Kind { kAffine, kConstant, kBoundedRational };

  // x -> beta - gamma * x
  static CoefFn affine(double beta, double gamma) { return CoefFn(Kind::kAffine, beta, gamma); }
  static CoefFn constant(double s) { return CoefFn(Kind::kConstant, s, 0.0); }
  // x -> s0 + s1 / (1 + x^2)
  static CoefFn bounded_rational(double s0, double s1) {
    return CoefFn(Kind::kBoundedRational, s0, s1);
  }
  static CoefFn parse(std::string_view text) {
    const CallExpr call = parse_call(text);
    if (call.name == "affine" && call.args.size() == 2) return affine(call.args[0], call.args[1]);
    if (call.name == "constant" && call.args.size() == 1) return constant(call.args[0]);
    if (call.name == "bounded_rational" && call.args.size() == 2)
      return bounded_rational(call.args[0], call.args[1]);
    throw DomainError("unknown coefficient function '" + std::string(text) + "'");
  }

  Kind kind() const noexcept { return kind_; }
  double p0() const noexcept { return p0_; }
  double p1() const noexcept { return p1_; }

  double operator()(double x) const {
    switch (kind_) {
      case Kind::kAffine: return p0_ - p1_ * x;
      case Kind::kConstant: return p0_;
      case Kind::kBoundedRational: return p0_ + p1_ / (1.0 + x * x);
    }
    return 0.0;
  }

  double lipschitz() const {
    switch (kind_) {
      case Kind::kAffine: return std::abs(p1_);
      case Kind::kConstant: return 0.0;
      // max |d/dx s1/(1+x^2)| is attained at x = 1/sqrt(3)
      case Kind::kBoundedRational: return 3.0 * std::sqrt(3.0) / 8.0 * std::abs(p1_);
    }
    return 0.0;
  }

  // (H2): bounded away from 0 and infinity.
  bool valid_as_sigma() const {
    switch (kind_) {
      case Kind::kAffine: return false;
      case Kind::kConstant: return p0_ > 0.0;
      case Kind::kBoundedRational: return p0_ > 0.0 && p1_ >= 0.0;
    }
    return false;
  }

  // M with 1/M <= sigma <= M, for valid sigma kinds.
  double h2_bound() const {
    if (!valid_as_sigma()) throw DomainError("coefficient is not a valid diffusion coefficient");
    if (kind_ == Kind::kConstant) return std::max(p0_, 1.0 / p0_);
    return std::max(p0_ + p1_, 1.0 / p0_);
  }

  double min_value_as_sigma() const { return p0_; }
  double max_value_as_sigma() const {
    return kind_ == Kind::kBoundedRational ? p0_ + p1_ : p0_;
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::kAffine: return "affine(" + format_g17(p0_) + "," + format_g17(p1_) + ")";
      case Kind::kConstant: return "constant(" + format_g17(p0_) + ")";
      case Kind::kBoundedRational:
        return "bounded_rational(" + format_g17(p0_) + "," + format_g17(p1_) + ")";
    }
    return {};
  }

 private:
  CoefFn(Kind kind, double p0, double p1) : kind_(kind), p0_(p0), p1_(p1) {
    if (!std::isfinite(p0) || !std::isfinite(p1))
      throw DomainError("coefficient parameters must be finite");
  }

  Kind kind_;
  double p0_, p1_;
};

// d xi = [S(theta, t) + b(xi)] dt + sigma(xi) dW.
class DiffusionModel {
 public:
  DiffusionModel(SignalSpec signal, CoefFn drift, CoefFn sigma)
      : signal_(std::move(signal)), drift_(drift), sigma_(sigma) {
    if (!sigma.valid_as_sigma())
      throw DomainError("sigma must be bounded away from 0 and infinity: " + sigma.describe());
  }

  const SignalSpec& signal() const noexcept { return signal_; }
  const CoefFn& drift() const noexcept { return drift_; }
  const CoefFn& sigma() const noexcept { return sigma_; }
  double period() const noexcept { return signal_.period(); }
  double theta() const noexcept { return signal_.theta(); }

  // Affine drift with gamma > 0 makes the period-sampled chain positive Harris.
  // Other drifts are accepted, but recurrence is then the caller's claim.
  bool h1_guaranteed() const { return drift_.kind() == CoefFn::Kind::kAffine && drift_.p1() > 0.0; }
  bool ou_type() const { return h1_guaranteed(); }
  bool constant_sigma() const { return sigma_.kind() == CoefFn::Kind::kConstant; }

  DiffusionModel with_theta(double theta) const {
    return DiffusionModel(signal_.with_theta(theta), drift_, sigma_);
  }

  // key=value pairs identifying the model, in a stable order.
  std::vector<std::pair<std::string, std::string>> describe() const {
    return {{"model.T", format_g17(signal_.period())},
            {"model.a", format_g17(signal_.duration())},
            {"model.theta", format_g17(signal_.theta())},
            {"model.lambda", signal_.lambda().describe()},
            {"model.lambda_star", signal_.lambda_star().describe()},
            {"model.b", drift_.describe()},
            {"model.sigma", sigma_.describe()}};
  }

 private:
  SignalSpec signal_;
  CoefFn drift_;
  CoefFn sigma_;
};

}  // namespace phasediff
