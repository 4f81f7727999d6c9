#pragma once

// Experiment configuration, the registry of checks runnable from a config,
// and report generation. Reports are pure functions of the config: runtime is
// kept out of the report files so reruns compare byte for byte.

#include <yaml-cpp/yaml.h>

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phasediff/ergodic.hpp"
#include "phasediff/errors.hpp"
#include "phasediff/estimators.hpp"
#include "phasediff/io.hpp"
#include "phasediff/likelihood.hpp"
#include "phasediff/limit.hpp"
#include "phasediff/model.hpp"
#include "phasediff/simulate.hpp"

namespace phasediff {

// --- report entries ---------------------------------------------------------

enum class PassRule {
  kAbsolute,        // |estimate - target| <= tolerance
  kRelative,        // |estimate - target| <= tolerance |target|
  kStandardErrors,  // |estimate - target| <= tolerance se
  kAtLeast,         // estimate >= (1 - tolerance) target
  kAtMost,          // estimate <= target + tolerance
};

inline const char* rule_name(PassRule r) {
  switch (r) {
    case PassRule::kAbsolute: return "absolute";
    case PassRule::kRelative: return "relative";
    case PassRule::kStandardErrors: return "standard_errors";
    case PassRule::kAtLeast: return "at_least";
    case PassRule::kAtMost: return "at_most";
  }
  return "?";
}

inline bool passes(PassRule rule, double estimate, double se, double target, double tolerance) {
  if (!std::isfinite(estimate)) return false;
  const double diff = std::abs(estimate - target);
  switch (rule) {
    case PassRule::kAbsolute: return diff <= tolerance;
    case PassRule::kRelative: return diff <= tolerance * std::abs(target);
    case PassRule::kStandardErrors: return diff <= tolerance * se;
    case PassRule::kAtLeast: return estimate >= (1.0 - tolerance) * target;
    case PassRule::kAtMost: return estimate <= target + tolerance;
  }
  return false;
}

struct ReportEntry {
  std::string check_name;
  double estimate = 0.0;
  double se = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  PassRule rule = PassRule::kAbsolute;
  bool pass = false;
  double runtime_seconds = 0.0;
};

inline ReportEntry make_entry(std::string name, double estimate, double se, double target, double tolerance,
                              PassRule rule) {
  ReportEntry e{std::move(name), estimate, se, target, tolerance, rule, false, 0.0};
  e.pass = passes(rule, estimate, se, target, tolerance);
  return e;
}

// --- configuration ----------------------------------------------------------

struct RunBlock {
  std::size_t n_periods = 150;
  int steps_per_period = 2000;
  std::size_t replicates = 2000;
  std::uint64_t seed = 0;
  std::size_t burn_in_periods = 0;  // 0 selects the model default
};

// One requested check: its registry name plus the raw parameter mapping, kept
// as YAML so later lookups can still report source lines.
struct CheckRequest {
  std::string name;
  YAML::Node params;
  int line = 0;
};

struct OutputBlock {
  std::filesystem::path directory = "phasediff-out";
  bool csv = true;
  bool json = true;
};

struct ExperimentConfig {
  std::optional<DiffusionModel> model;
  RunBlock run;
  std::vector<CheckRequest> checks;
  OutputBlock output;
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

template <class T>
T scalar_as(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) throw ConfigError("expected a scalar", key, line_of(n));
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("cannot read value '" + n.Scalar() + "'", key, line_of(n));
  }
}

inline void reject_unknown(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& prefix) {
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("unknown key", prefix + key, line_of(kv.first));
  }
}

inline DiffusionModel parse_model(const YAML::Node& m) {
  if (!m.IsMap()) throw ConfigError("model block must be a mapping", "model", line_of(m));
  reject_unknown(m, {"T", "a", "theta", "lambda", "lambda_star", "b", "sigma"}, "model.");
  auto need = [&](const char* key) {
    const YAML::Node n = m[key];
    if (!n) throw ConfigError("missing required key", std::string("model.") + key, line_of(m));
    return n;
  };
  const std::string pre = "model.";
  const double T = scalar_as<double>(need("T"), pre + "T");
  const double a = scalar_as<double>(need("a"), pre + "a");
  const double theta = scalar_as<double>(need("theta"), pre + "theta");
  auto fn = [&](const char* key, auto parse) {
    const YAML::Node n = need(key);
    try {
      return parse(scalar_as<std::string>(n, pre + key));
    } catch (const DomainError& e) {
      throw ConfigError(e.what(), pre + key, line_of(n));
    }
  };
  if (!(T > 0.0)) throw ConfigError("need T > 0", pre + "T", line_of(m["T"]));
  if (!(a > 0.0 && a < T)) throw ConfigError("violates 0 < a < T", pre + "a", line_of(m["a"]));
  const auto lambda = fn("lambda", [&](const std::string& s) { return PeriodicFn::parse(s, T); });
  const auto lambda_star = fn("lambda_star", [&](const std::string& s) { return PeriodicFn::parse(s, T); });
  const auto b = fn("b", [](const std::string& s) { return CoefFn::parse(s); });
  const auto sigma = fn("sigma", [](const std::string& s) { return CoefFn::parse(s); });
  try {
    return DiffusionModel(SignalSpec(lambda, lambda_star, T, a, theta), b, sigma);
  } catch (const DomainError& e) {
    throw ConfigError(e.what(), "model", line_of(m));
  }
}

}  // namespace detail

// Names and parameter keys accepted by the check registry.
inline const std::map<std::string, std::set<std::string>>& check_parameters() {
  static const std::map<std::string, std::set<std::string>> table = {
      {"limit_variance", {"J", "K", "du", "replicates", "tolerance_mle", "tolerance_be"}},
      {"hellinger_exact", {"J", "deltas", "replicates", "se_multiple"}},
      {"hellinger_holder", {"J", "delta", "replicates", "tolerance", "se_multiple"}},
      {"equivariance", {"J", "shifts", "replicates", "K", "du", "alpha"}},
      {"tail_decay", {"J", "K_list", "replicates", "grid_K", "du", "min_r_squared"}},
      {"lam_target", {"J", "K", "du", "replicates", "tolerance"}},
      {"ou_ergodic", {"r", "n_periods", "se_multiple", "dual_route_tolerance"}},
      {"bracket", {"r", "h", "n", "tolerance_rhs", "tolerance_limit"}},
      {"clt", {"r_points", "h_points", "n", "replicates", "se_multiple"}},
      {"mc_moments", {"n", "replicates", "tolerance"}},
      {"contiguous", {"u", "n", "replicates", "se_multiple"}},
      {"lam_ordering", {"u_list", "n", "replicates", "lam_replicates", "K", "du", "tolerance"}},
      {"j_theta", {"n_periods", "replicates", "se_multiple"}},
      {"martingale", {"zeta_prime", "n", "replicates", "se_multiple"}},
      {"lln", {"functional", "f", "r", "r_end", "n_periods", "se_multiple"}},
  };
  return table;
}

inline bool check_needs_model(const std::string& name) {
  static const std::set<std::string> limit_only = {"limit_variance", "hellinger_exact", "hellinger_holder",
                                                   "equivariance", "tail_decay", "lam_target"};
  return !limit_only.count(name);
}

inline ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, "", e.mark.line + 1);
  }
  if (!root.IsMap()) throw ConfigError("top level must be a mapping");
  detail::reject_unknown(root, {"model", "run", "study", "output"}, "");
  ExperimentConfig cfg;
  if (root["model"]) cfg.model = detail::parse_model(root["model"]);

  const YAML::Node run = root["run"];
  if (!run || !run.IsMap()) throw ConfigError("missing run block", "run");
  detail::reject_unknown(run, {"n_periods", "steps_per_period", "replicates", "seed", "burn_in_periods"}, "run.");
  if (!run["seed"]) throw ConfigError("seed is required", "run.seed", detail::line_of(run));
  cfg.run.seed = detail::scalar_as<std::uint64_t>(run["seed"], "run.seed");
  if (run["n_periods"]) cfg.run.n_periods = detail::scalar_as<std::size_t>(run["n_periods"], "run.n_periods");
  if (run["steps_per_period"])
    cfg.run.steps_per_period = detail::scalar_as<int>(run["steps_per_period"], "run.steps_per_period");
  if (run["replicates"]) cfg.run.replicates = detail::scalar_as<std::size_t>(run["replicates"], "run.replicates");
  if (run["burn_in_periods"])
    cfg.run.burn_in_periods = detail::scalar_as<std::size_t>(run["burn_in_periods"], "run.burn_in_periods");
  if (cfg.run.steps_per_period < 1)
    throw ConfigError("must be positive", "run.steps_per_period", detail::line_of(run["steps_per_period"]));

  const YAML::Node study = root["study"];
  if (!study || !study.IsMap() || !study["checks"] || !study["checks"].IsSequence())
    throw ConfigError("study.checks must be a list", "study.checks");
  detail::reject_unknown(study, {"checks"}, "study.");
  for (const auto& item : study["checks"]) {
    CheckRequest req;
    req.line = detail::line_of(item);
    if (item.IsScalar()) {
      req.name = item.as<std::string>();
      req.params = YAML::Node(YAML::NodeType::Map);
    } else if (item.IsMap() && item["name"]) {
      req.name = detail::scalar_as<std::string>(item["name"], "study.checks.name");
      req.params = YAML::Node(YAML::NodeType::Map);
      for (const auto& kv : item) {
        const auto key = kv.first.as<std::string>();
        if (key != "name") req.params[key] = kv.second;
      }
    } else {
      throw ConfigError("check must be a name or a mapping with 'name'", "study.checks", req.line);
    }
    const auto& table = check_parameters();
    const auto it = table.find(req.name);
    if (it == table.end()) throw ConfigError("unknown check '" + req.name + "'", "study.checks", req.line);
    for (const auto& kv : item) {
      const auto key = kv.first.as<std::string>();
      if (key != "name" && !it->second.count(key))
        throw ConfigError("unknown parameter", "study.checks." + req.name + "." + key, detail::line_of(kv.first));
    }
    for (const auto& kv : req.params) {
      const YAML::Node v = kv.second;
      const auto key = kv.first.as<std::string>();
      if (key.rfind("tolerance", 0) == 0 || key == "se_multiple" || key == "alpha") {
        if (!(detail::scalar_as<double>(v, "study.checks." + req.name + "." + key) > 0.0))
          throw ConfigError("tolerances must be positive", "study.checks." + req.name + "." + key,
                            detail::line_of(v));
      }
    }
    if (check_needs_model(req.name) && !cfg.model)
      throw ConfigError("check '" + req.name + "' needs a model block", "model", req.line);
    cfg.checks.push_back(std::move(req));
  }

  if (const YAML::Node out = root["output"]) {
    detail::reject_unknown(out, {"directory", "formats"}, "output.");
    if (out["directory"]) cfg.output.directory = detail::scalar_as<std::string>(out["directory"], "output.directory");
    if (const YAML::Node f = out["formats"]) {
      if (!f.IsSequence()) throw ConfigError("formats must be a list", "output.formats", detail::line_of(f));
      cfg.output.csv = cfg.output.json = false;
      for (const auto& x : f) {
        const auto s = detail::scalar_as<std::string>(x, "output.formats");
        if (s == "csv") cfg.output.csv = true;
        else if (s == "json") cfg.output.json = true;
        else throw ConfigError("unknown format '" + s + "'", "output.formats", detail::line_of(x));
      }
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what(), path.string());
  }
  return parse_config(text);
}

// --- check implementations --------------------------------------------------

// Parameter access with defaults; errors name the check and key.
class CheckParams {
 public:
  CheckParams(const CheckRequest& req, const RunBlock& run) : req_(req), run_(run) {}

  double number(const std::string& key, double fallback) const {
    const YAML::Node n = req_.params[key];
    return n ? detail::scalar_as<double>(n, qualified(key)) : fallback;
  }
  std::size_t count(const std::string& key, std::size_t fallback) const {
    const YAML::Node n = req_.params[key];
    return n ? detail::scalar_as<std::size_t>(n, qualified(key)) : fallback;
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    const YAML::Node n = req_.params[key];
    return n ? detail::scalar_as<std::string>(n, qualified(key)) : fallback;
  }
  std::vector<double> list(const std::string& key, std::vector<double> fallback) const {
    const YAML::Node n = req_.params[key];
    if (!n) return fallback;
    if (!n.IsSequence()) throw ConfigError("expected a list", qualified(key), detail::line_of(n));
    std::vector<double> out;
    for (const auto& x : n) out.push_back(detail::scalar_as<double>(x, qualified(key)));
    return out;
  }
  const RunBlock& run() const { return run_; }

 private:
  std::string qualified(const std::string& key) const { return "study.checks." + req_.name + "." + key; }
  const CheckRequest& req_;
  const RunBlock& run_;
};

struct CheckContext {
  const ExperimentConfig& config;
  const CheckParams& params;
  std::uint64_t seed;
  // extra artifacts: file name -> contents
  std::map<std::string, std::string>& artifacts;
};

namespace checks {

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::vector<ReportEntry> limit_variance(const CheckContext& c) {
  const double J = c.params.number("J", 1.0);
  const auto v = limit_variance_study(J, c.params.number("K", 150.0), c.params.number("du", 0.02),
                                      c.params.count("replicates", 200000), c.seed);
  return {make_entry("limit_variance.mle", v.scaled_var_mle.value, v.scaled_var_mle.se, kArgmaxVariance,
                     c.params.number("tolerance_mle", 0.8), PassRule::kAbsolute),
          make_entry("limit_variance.bayes", v.scaled_var_bayes.value, v.scaled_var_bayes.se, kPitmanVariance,
                     c.params.number("tolerance_be", 0.6), PassRule::kAbsolute)};
}

inline std::vector<ReportEntry> hellinger_exact_check(const CheckContext& c) {
  const double J = c.params.number("J", 1.0);
  const double k = c.params.number("se_multiple", 3.0);
  const auto reps = c.params.count("replicates", 10000);
  std::vector<ReportEntry> out;
  const auto deltas = c.params.list("deltas", {0.5, 2.0, 8.0});
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const auto h = hellinger_exact(J, deltas[i], reps, seed_stream(c.seed, i));
    const std::string tag = "hellinger_exact[" + fmt_num(deltas[i]) + "].";
    out.push_back(make_entry(tag + "one_minus_sqrt_sq", h.one_minus_sqrt_sq.value, h.one_minus_sqrt_sq.se,
                             h.closed_one_minus_sqrt_sq, k, PassRule::kStandardErrors));
    out.push_back(make_entry(tag + "sqrt_l", h.sqrt_l.value, h.sqrt_l.se, h.closed_sqrt_l, k,
                             PassRule::kStandardErrors));
    out.push_back(make_entry(tag + "one_minus_quarter_4", h.one_minus_quarter_4.value, h.one_minus_quarter_4.se,
                             h.closed_one_minus_quarter_4, k, PassRule::kStandardErrors));
  }
  return out;
}

inline std::vector<ReportEntry> hellinger_holder(const CheckContext& c) {
  const double J = c.params.number("J", 1.0);
  const double delta = c.params.number("delta", 0.01);
  const auto h = hellinger_exact(J, delta, c.params.count("replicates", 10000), c.seed);
  return {make_entry("hellinger_holder.closed_form", h.closed_hellinger_sq_per_delta, 0.0, J / 8.0,
                     c.params.number("tolerance", 0.01), PassRule::kRelative),
          make_entry("hellinger_holder.monte_carlo", h.hellinger_sq_per_delta.value, h.hellinger_sq_per_delta.se,
                     h.closed_hellinger_sq_per_delta, c.params.number("se_multiple", 3.0),
                     PassRule::kStandardErrors)};
}

inline std::vector<ReportEntry> equivariance(const CheckContext& c) {
  const auto shifts = c.params.list("shifts", {0.0, 3.0, -5.0});
  const auto res = equivariance_check(c.params.number("J", 1.0), shifts, c.params.count("replicates", 50000), c.seed,
                                      c.params.number("K", 150.0), c.params.number("du", 0.02));
  const double alpha = c.params.number("alpha", 0.01);
  std::vector<ReportEntry> out;
  for (std::size_t k = 0; k < res.pairs.size(); ++k) {
    const auto [i, j] = res.pairs[k];
    // p-value of the KS test against the level alpha
    out.push_back(make_entry("equivariance.ks[" + fmt_num(shifts[i]) + "," + fmt_num(shifts[j]) + "]",
                             res.ks[k].p_value, 0.0, alpha, 0.0, PassRule::kAtLeast));
  }
  return out;
}

inline std::vector<ReportEntry> tail_decay(const CheckContext& c) {
  const auto res = tail_decay_check(c.params.number("J", 1.0), c.params.count("replicates", 20000),
                                    c.params.list("K_list", {5.0, 10.0, 20.0}), c.seed,
                                    c.params.number("grid_K", 100.0), c.params.number("du", 0.02));
  std::vector<ReportEntry> out;
  for (std::size_t q = 0; q + 1 < res.exceedance.size(); ++q) {
    // p(K_{q+1}) must stay strictly below p(K_q)
    const auto& lo = res.exceedance[q + 1];
    const auto& hi = res.exceedance[q];
    auto e = make_entry("tail_decay.decreasing[" + fmt_num(res.K_list[q]) + "," + fmt_num(res.K_list[q + 1]) + "]",
                        lo.estimate, lo.se, hi.estimate, 0.0, PassRule::kAtMost);
    e.pass = lo.estimate < hi.estimate;
    out.push_back(e);
  }
  out.push_back(make_entry("tail_decay.log_linear_r2", res.log_fit.r_squared, 0.0,
                           c.params.number("min_r_squared", 0.9), 0.0, PassRule::kAtLeast));
  return out;
}

inline std::vector<ReportEntry> lam_target_check(const CheckContext& c) {
  const double J = c.params.number("J", 1.0);
  const auto t = lam_target(J, c.params.count("replicates", 200000), c.seed, c.params.number("K", 150.0),
                            c.params.number("du", 0.02));
  return {make_entry("lam_target", t.value, t.se, kPitmanVariance / (J * J), c.params.number("tolerance", 0.6),
                     PassRule::kAbsolute)};
}

inline SimulationOptions sim_options(const RunBlock& run) { return {run.steps_per_period, run.burn_in_periods}; }

inline std::vector<ReportEntry> ou_ergodic(const CheckContext& c) {
  const DiffusionModel& m = *c.config.model;
  const auto ou = OUAnalytic::from_model(m);
  const double theta = m.theta(), a = m.signal().duration();
  const auto rs = c.params.list("r", {0.0, theta + 0.5 * a});
  const std::size_t n = c.params.count("n_periods", 5000);
  const double k = c.params.number("se_multiple", 3.0);
  const auto opt = sim_options(c.params.run());
  const auto path = simulate_stationary(m, n, opt.steps_per_period, c.seed, burn_in_for(m, opt));
  std::vector<ReportEntry> out;
  for (double r : rs) {
    const auto law = empirical_invariant(sample_at_phase(path, r), 0);
    const auto mom = ou_moments(ou, r);
    const std::string tag = "ou_ergodic[r=" + fmt_num(r) + "].";
    out.push_back(make_entry(tag + "mean", law.summary.mean, law.summary.se_mean, mom.mean, k,
                             PassRule::kStandardErrors));
    out.push_back(make_entry(tag + "variance", law.summary.variance, law.summary.se_variance, mom.variance, k,
                             PassRule::kStandardErrors));
    out.push_back(make_entry(tag + "dual_route", ou_mean_folded(ou, r), 0.0, ou_mean_truncated(ou, r),
                             c.params.number("dual_route_tolerance", 1e-10), PassRule::kAbsolute));
  }
  return out;
}

inline std::vector<ReportEntry> bracket(const CheckContext& c) {
  const DiffusionModel& m = *c.config.model;
  const double r = c.params.number("r", 0.5 * m.period());
  const double h = c.params.number("h", 1.0);
  const std::size_t n = c.params.count("n", c.params.run().n_periods);
  const auto res = bracket_check(m, r, h, n, c.seed, sim_options(c.params.run()));
  const double tl = c.params.number("tolerance_limit", 0.10);
  return {make_entry("bracket.lhs_vs_rhs", res.lhs, 0.0, res.rhs, c.params.number("tolerance_rhs", 0.05),
                     PassRule::kRelative),
          make_entry("bracket.lhs_vs_limit", res.lhs, 0.0, res.limit, tl, PassRule::kRelative),
          make_entry("bracket.rhs_vs_limit", res.rhs, 0.0, res.limit, tl, PassRule::kRelative)};
}

inline std::vector<ReportEntry> clt(const CheckContext& c) {
  const DiffusionModel& m = *c.config.model;
  const double T = m.period();
  const auto res = martingale_clt_check(m, c.params.list("r_points", {0.25 * T, 0.75 * T}),
                                        c.params.list("h_points", {1.0, 2.0, -1.0}),
                                        c.params.count("n", c.params.run().n_periods),
                                        c.params.count("replicates", c.params.run().replicates), c.seed,
                                        sim_options(c.params.run()));
  const double k = c.params.number("se_multiple", 4.0);
  std::vector<ReportEntry> out;
  const std::size_t mh = res.h_points.size();
  for (std::size_t e1 = 0; e1 < res.dim; ++e1)
    for (std::size_t e2 = e1; e2 < res.dim; ++e2) {
      const std::size_t idx = e1 * res.dim + e2;
      const std::string name = "clt.cov[r=" + fmt_num(res.r_points[e1 / mh]) + ",h=" + fmt_num(res.h_points[e1 % mh]) +
                               "][r=" + fmt_num(res.r_points[e2 / mh]) + ",h=" + fmt_num(res.h_points[e2 % mh]) + "]";
      out.push_back(make_entry(name, res.empirical[idx], res.standard_error[idx], res.target[idx], k,
                               PassRule::kStandardErrors));
    }
  return out;
}

inline McStudyOptions study_options(const RunBlock& run) { return {run.steps_per_period, run.burn_in_periods}; }

inline std::vector<ReportEntry> mc_moments(const CheckContext& c) {
  const DiffusionModel& m = *c.config.model;
  const auto s = mc_study(m, m.theta(), c.params.count("n", c.params.run().n_periods),
                          c.params.count("replicates", c.params.run().replicates), c.seed, std::nullopt,
                          study_options(c.params.run()));
  c.artifacts["mc_moments.csv"] = mc_study_csv(s);
  const double tol = c.params.number("tolerance", 0.15);
  return {make_entry("mc_moments.var_mle", s.mle.summary.variance, s.mle.summary.se_variance, s.target_var_mle, tol,
                     PassRule::kRelative),
          make_entry("mc_moments.var_bayes", s.bayes.summary.variance, s.bayes.summary.se_variance,
                     s.target_var_bayes, tol, PassRule::kRelative)};
}

inline std::vector<ReportEntry> contiguous(const CheckContext& c) {
  const DiffusionModel& m = *c.config.model;
  const std::size_t n = c.params.count("n", c.params.run().n_periods);
  const std::size_t reps = c.params.count("replicates", c.params.run().replicates);
  const double u = c.params.number("u", 3.0);
  const auto opt = study_options(c.params.run());
  const auto s0 = mc_study(m, m.theta(), n, reps, seed_stream(c.seed, 0), 0.0, opt);
  const auto su = mc_study(m, m.theta(), n, reps, seed_stream(c.seed, 1), u, opt);
  const double se = std::hypot(s0.bayes.risk.se, su.bayes.risk.se);
  return {make_entry("contiguous.bayes_risk_difference[u=" + fmt_num(u) + "]", su.bayes.risk.value - s0.bayes.risk.value,
                     se, 0.0, c.params.number("se_multiple", 2.0), PassRule::kStandardErrors)};
}

inline std::vector<ReportEntry> lam_ordering(const CheckContext& c) {
  const DiffusionModel& m = *c.config.model;
  const std::size_t n = c.params.count("n", c.params.run().n_periods);
  const std::size_t reps = c.params.count("replicates", c.params.run().replicates);
  const auto us = c.params.list("u_list", {-5.0, 0.0, 5.0});
  const auto opt = study_options(c.params.run());
  double worst = -INFINITY, worst_se = 0.0;
  for (std::size_t i = 0; i < us.size(); ++i) {
    const auto s = mc_study(m, m.theta(), n, reps, seed_stream(c.seed, i), us[i], opt);
    if (s.bayes.risk.value > worst) {
      worst = s.bayes.risk.value;
      worst_se = s.bayes.risk.se;
    }
  }
  const double J = j_theta_analytic(m, m.theta());
  const auto t = lam_target(1.0, c.params.count("lam_replicates", 200000), seed_stream(c.seed, us.size()),
                            c.params.number("K", 150.0), c.params.number("du", 0.02));
  return {make_entry("lam_ordering.max_bayes_risk", worst, worst_se, t.value / (J * J),
                     c.params.number("tolerance", 0.2), PassRule::kAtLeast)};
}

inline std::vector<ReportEntry> j_theta_check(const CheckContext& c) {
  const DiffusionModel& m = *c.config.model;
  JThetaEmpirical opt;
  opt.n_periods = c.params.count("n_periods", 2000);
  opt.replicates = c.params.count("replicates", 8);
  opt.seed = c.seed;
  opt.steps_per_period = c.params.run().steps_per_period;
  const auto emp = j_theta_empirical(m, m.theta(), opt);
  return {make_entry("j_theta.empirical_vs_analytic", emp.value, emp.se, j_theta_analytic(m, m.theta()),
                     c.params.number("se_multiple", 3.0), PassRule::kStandardErrors)};
}

inline std::vector<ReportEntry> martingale(const CheckContext& c) {
  const DiffusionModel& m = *c.config.model;
  const double zp = c.params.number("zeta_prime", m.theta() + 0.5 / static_cast<double>(c.params.run().n_periods));
  const std::size_t n = c.params.count("n", c.params.run().n_periods);
  const auto rep = hellinger_mc(m, m.theta(), zp, n, c.params.count("replicates", c.params.run().replicates), c.seed,
                                m.ou_type() ? j_theta_analytic(m, m.theta()) : 0.0, sim_options(c.params.run()));
  return {make_entry("martingale.mean_l", rep.l.value, rep.l.se, 1.0, c.params.number("se_multiple", 3.0),
                     PassRule::kStandardErrors)};
}

inline std::vector<ReportEntry> lln(const CheckContext& c) {
  const DiffusionModel& m = *c.config.model;
  const double r = c.params.number("r", 0.0);
  const auto functional = parse_functional(c.params.text("functional", "point_sample"), r,
                                           c.params.number("r_end", m.period()));
  const Observable f = Observable::parse(c.params.text("f", "identity"));
  const auto opt = sim_options(c.params.run());
  const auto path = simulate_stationary(m, c.params.count("n_periods", 5000), opt.steps_per_period, c.seed,
                                        burn_in_for(m, opt));
  const auto res = lln_functional(path, functional, f);
  return {make_entry("lln.terminal", res.terminal, res.terminal_se, res.theoretical_limit,
                     c.params.number("se_multiple", 3.0), PassRule::kStandardErrors)};
}

}  // namespace checks

using CheckFn = std::function<std::vector<ReportEntry>(const CheckContext&)>;

inline const std::map<std::string, CheckFn>& check_registry() {
  static const std::map<std::string, CheckFn> table = {
      {"limit_variance", checks::limit_variance}, {"hellinger_exact", checks::hellinger_exact_check},
      {"hellinger_holder", checks::hellinger_holder}, {"equivariance", checks::equivariance},
      {"tail_decay", checks::tail_decay},           {"lam_target", checks::lam_target_check},
      {"ou_ergodic", checks::ou_ergodic},           {"bracket", checks::bracket},
      {"clt", checks::clt},                         {"mc_moments", checks::mc_moments},
      {"contiguous", checks::contiguous},           {"lam_ordering", checks::lam_ordering},
      {"j_theta", checks::j_theta_check},           {"martingale", checks::martingale},
      {"lln", checks::lln},
  };
  return table;
}

// --- running and reporting --------------------------------------------------

struct RunResult {
  std::vector<ReportEntry> entries;
  std::map<std::string, std::string> artifacts;
  bool all_pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const ReportEntry& e) { return e.pass; });
  }
};

// Check k of the config runs with seed_stream(run.seed, k); entries carry the
// wall-clock time of their check.
inline RunResult run_checks(const ExperimentConfig& cfg) {
  RunResult res;
  for (std::size_t k = 0; k < cfg.checks.size(); ++k) {
    const CheckRequest& req = cfg.checks[k];
    const CheckParams params(req, cfg.run);
    const CheckContext ctx{cfg, params, seed_stream(cfg.run.seed, k), res.artifacts};
    const auto start = std::chrono::steady_clock::now();
    auto entries = check_registry().at(req.name)(ctx);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (auto& e : entries) {
      e.runtime_seconds = secs;
      res.entries.push_back(std::move(e));
    }
  }
  return res;
}

inline std::string report_csv(const std::vector<ReportEntry>& entries) {
  std::string out = "check_name,estimate,se,target,tolerance,rule,pass\n";
  for (const auto& e : entries)
    out += e.check_name + ',' + format_g17(e.estimate) + ',' + format_g17(e.se) + ',' + format_g17(e.target) + ',' +
           format_g17(e.tolerance) + ',' + rule_name(e.rule) + ',' + (e.pass ? "true" : "false") + '\n';
  return out;
}

inline nlohmann::json entry_json(const ReportEntry& e) {
  return {{"check_name", e.check_name}, {"estimate", e.estimate}, {"se", e.se},
          {"target", e.target},         {"tolerance", e.tolerance}, {"rule", rule_name(e.rule)},
          {"pass", e.pass}};
}

inline std::string report_json(const ExperimentConfig& cfg, const std::vector<ReportEntry>& entries) {
  nlohmann::json j;
  nlohmann::json model = nlohmann::json::object();
  if (cfg.model)
    for (const auto& [k, v] : cfg.model->describe()) model[k.substr(k.find('.') + 1)] = v;
  j["model"] = model;
  j["seed"] = cfg.run.seed;
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) j["entries"].push_back(entry_json(e));
  bool all = true;
  for (const auto& e : entries) all = all && e.pass;
  j["all_pass"] = all;
  return j.dump(2) + "\n";
}

// Runtimes go to timing.csv, separate from the deterministic report files.
inline std::string timing_csv(const std::vector<ReportEntry>& entries) {
  std::string out = "check_name,runtime_seconds\n";
  for (const auto& e : entries) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", e.runtime_seconds);
    out += e.check_name + ',' + buf + '\n';
  }
  return out;
}

// Writes report.csv / report.json (as configured), timing.csv and check
// artifacts into output.directory.
inline void write_reports(const ExperimentConfig& cfg, const RunResult& res) {
  const auto& dir = cfg.output.directory;
  if (cfg.output.csv) io::write_file_atomic(dir / "report.csv", report_csv(res.entries));
  if (cfg.output.json) io::write_file_atomic(dir / "report.json", report_json(cfg, res.entries));
  io::write_file_atomic(dir / "timing.csv", timing_csv(res.entries));
  for (const auto& [name, content] : res.artifacts) io::write_file_atomic(dir / name, content);
}

inline RunResult run_config(const std::filesystem::path& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  RunResult res = run_checks(cfg);
  write_reports(cfg, res);
  return res;
}

}  // namespace phasediff
