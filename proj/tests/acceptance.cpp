// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "phasediff/estimators.hpp"
#include "phasediff/ergodic.hpp"
#include "phasediff/harness.hpp"
#include "phasediff/likelihood.hpp"
#include "phasediff/limit.hpp"

using namespace phasediff;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool within_se(const Estimate& e, double target, double k) { return std::abs(e.value - target) <= k * e.se; }

DiffusionModel finite_n_model() {
  return DiffusionModel(
      SignalSpec(PeriodicFn::constant(1.0, 1.0), PeriodicFn::constant(2.0, 1.0), 1.0, 0.3, 0.35025),
      CoefFn::affine(0.0, 1.0), CoefFn::constant(1.0));
}

DiffusionModel bracket_model() {
  return DiffusionModel(
      SignalSpec(PeriodicFn::constant(1.0, 1.0), PeriodicFn::constant(2.0, 1.0), 1.0, 0.3, 0.35025),
      CoefFn::affine(0.0, 1.0), CoefFn::bounded_rational(1.0, 0.5));
}

// Shared between criteria: the limit engine run and the unshifted finite-n study.
struct Shared {
  VarianceStudy limit;
  double limit_second_moment_bayes = 0.0;
  std::optional<McStudy> study_u0;
};

Shared shared;

const McStudy& study_u0() {
  if (!shared.study_u0) {
    McStudyOptions opt;
    opt.steps_per_period = 2000;
    shared.study_u0 = mc_study(finite_n_model(), 0.35025, 150, 2000, 9001, 0.0, opt);
  }
  return *shared.study_u0;
}

Outcome limit_mle_variance() {
  const auto est = limit_replicates({150.0, 0.02}, 1.0, 0.0, 200000, 101);
  shared.limit = summarize_limit(est, 1.0);
  std::vector<double> u;
  for (const auto& e : est)
    if (!e.bayes_tail_flag) u.push_back(e.u_star);
  shared.limit_second_moment_bayes = stats::summarize(u).second_moment;
  const auto& v = shared.limit.scaled_var_mle;
  return {std::abs(v.value - kArgmaxVariance) <= 0.8,
          fmt("J^2 Var(u_hat) = %.3f (se %.3f), target 26 +- 0.8, %zu fields used, %zu flagged", v.value, v.se,
              shared.limit.used_mle, shared.limit.flagged_mle)};
}

Outcome limit_bayes_variance() {
  const auto& b = shared.limit.scaled_var_bayes;
  const auto& m = shared.limit.scaled_var_mle;
  const bool ordered = b.value < m.value;
  return {std::abs(b.value - kPitmanVariance) <= 0.6 && ordered,
          fmt("J^2 Var(u*) = %.3f (se %.3f), target %.3f +- 0.6; BE < MLE: %s", b.value, b.se, kPitmanVariance,
              ordered ? "yes" : "no")};
}

Outcome hellinger_identities() {
  bool ok = true;
  std::string detail;
  std::uint64_t k = 0;
  for (double d : {0.5, 2.0, 8.0}) {
    const auto h = hellinger_exact(1.0, d, 10000, seed_stream(201, k++));
    const double z1 = (h.one_minus_sqrt_sq.value - h.closed_one_minus_sqrt_sq) / h.one_minus_sqrt_sq.se;
    const double z2 = (h.sqrt_l.value - h.closed_sqrt_l) / h.sqrt_l.se;
    const double z3 = (h.one_minus_quarter_4.value - h.closed_one_minus_quarter_4) / h.one_minus_quarter_4.se;
    ok = ok && std::abs(z1) <= 3.0 && std::abs(z2) <= 3.0 && std::abs(z3) <= 3.0;
    detail += fmt("|D|=%g z=(%.2f, %.2f, %.2f) ", d, z1, z2, z3);
  }
  return {ok, detail + "[3 SE]"};
}

Outcome hellinger_holder() {
  const auto h = hellinger_exact(1.0, 0.01, 10000, 301);
  const double rel = std::abs(h.closed_hellinger_sq_per_delta - 0.125) / 0.125;
  const bool mc = within_se(h.hellinger_sq_per_delta, h.closed_hellinger_sq_per_delta, 3.0);
  return {rel <= 0.01 && mc, fmt("closed form %.6f vs J/8 = 0.125 (rel %.2e); MC %.6f (se %.2e)",
                                 h.closed_hellinger_sq_per_delta, rel, h.hellinger_sq_per_delta.value,
                                 h.hellinger_sq_per_delta.se)};
}

Outcome equivariance() {
  const auto res = equivariance_check(1.0, {0.0, 3.0, -5.0}, 50000, 401);
  bool ok = true;
  std::string detail;
  for (std::size_t k = 0; k < res.ks.size(); ++k) {
    ok = ok && res.ks[k].passes(0.01);
    detail += fmt("(%g,%g) D=%.4f p=%.3f  ", res.shifts[res.pairs[k].first], res.shifts[res.pairs[k].second],
                  res.ks[k].statistic, res.ks[k].p_value);
  }
  return {ok, detail + fmt("flagged %zu", res.flagged)};
}

Outcome ou_ergodics() {
  const DiffusionModel m(
      SignalSpec(PeriodicFn::sinusoid(1.0, 0.5, 0.0, 10.0), PeriodicFn::constant(2.0, 10.0), 10.0, 3.0, 4.0),
      CoefFn::affine(0.0, 1.0), CoefFn::constant(1.0));
  const auto ou = OUAnalytic::from_model(m);
  const auto path = simulate_stationary(m, 5000, 2000, 501, default_burn_in(m));
  bool ok = true;
  std::string detail;
  for (double r : {0.0, 5.5}) {
    const auto law = empirical_invariant(sample_at_phase(path, r), 0);
    const auto mom = ou_moments(ou, r);
    const double zm = (law.summary.mean - mom.mean) / law.summary.se_mean;
    const double zv = (law.summary.variance - mom.variance) / law.summary.se_variance;
    const double dual = std::abs(ou_mean_folded(ou, r) - ou_mean_truncated(ou, r));
    ok = ok && std::abs(zm) <= 3.0 && std::abs(zv) <= 3.0 && dual <= 1e-10;
    detail += fmt("r=%g M=%.5f mean z=%.2f var z=%.2f dual %.1e  ", r, mom.mean, zm, zv, dual);
  }
  return {ok, detail};
}

Outcome bracket() {
  SimulationOptions opt;
  opt.steps_per_period = 2000;
  const auto b = bracket_check(bracket_model(), 0.5, 1.0, 200, 601, opt);
  const double d_rhs = std::abs(b.lhs - b.rhs) / std::abs(b.rhs);
  const double d_lhs = std::abs(b.lhs - b.limit) / b.limit;
  const double d_lim = std::abs(b.rhs - b.limit) / b.limit;
  return {d_rhs <= 0.05 && d_lhs <= 0.10 && d_lim <= 0.10 && !b.underresolved,
          fmt("lhs %.5f rhs %.5f limit %.5f; |lhs-rhs|/rhs %.3f, lhs/limit-1 %.3f, rhs/limit-1 %.3f", b.lhs, b.rhs,
              b.limit, d_rhs, d_lhs, d_lim)};
}

Outcome martingale_clt() {
  SimulationOptions opt;
  opt.steps_per_period = 1000;
  const auto res = martingale_clt_check(bracket_model(), {0.25, 0.75}, {1.0, 2.0, -1.0}, 200, 2000, 701, opt);
  double worst = 0.0;
  for (std::size_t e = 0; e < res.dim * res.dim; ++e)
    worst = std::max(worst, std::abs(res.empirical[e] - res.target[e]) / res.standard_error[e]);
  return {worst <= 4.0 && !res.underresolved,
          fmt("%zux%zu covariance, Gamma = (%.4f, %.4f), worst |emp - target| = %.2f SE", res.dim, res.dim,
              res.gamma[0], res.gamma[1], worst)};
}

Outcome finite_n_moments() {
  const auto& s = study_u0();
  const double rm = std::abs(s.mle.summary.variance - s.target_var_mle) / s.target_var_mle;
  const double rb = std::abs(s.bayes.summary.variance - s.target_var_bayes) / s.target_var_bayes;
  return {rm <= 0.15 && rb <= 0.15,
          fmt("Var[n(mle-theta)] = %.4f vs %.4f (%.1f%%), Var[n(be-theta)] = %.4f vs %.4f (%.1f%%)",
              s.mle.summary.variance, s.target_var_mle, 100 * rm, s.bayes.summary.variance, s.target_var_bayes,
              100 * rb)};
}

Outcome contiguous() {
  const auto& s0 = study_u0();
  McStudyOptions opt;
  opt.steps_per_period = 2000;
  const auto s3 = mc_study(finite_n_model(), 0.35025, 150, 2000, 9003, 3.0, opt);
  const double diff = s3.bayes.risk.value - s0.bayes.risk.value;
  const double se = std::hypot(s0.bayes.risk.se, s3.bayes.risk.se);
  return {std::abs(diff) < 2.0 * se, fmt("BE risk u=0 %.4f, u=3 %.4f, difference %.4f vs 2 SE = %.4f",
                                         s0.bayes.risk.value, s3.bayes.risk.value, diff, 2.0 * se)};
}

Outcome lam_ordering() {
  McStudyOptions opt;
  opt.steps_per_period = 2000;
  double worst = study_u0().bayes.risk.value;
  std::string detail = fmt("risk u=0 %.4f", worst);
  for (double u : {-5.0, 5.0}) {
    const auto s = mc_study(finite_n_model(), 0.35025, 150, 2000, u < 0 ? 9005 : 9007, u, opt);
    worst = std::max(worst, s.bayes.risk.value);
    detail += fmt(", u=%g %.4f", u, s.bayes.risk.value);
  }
  const double bound = shared.limit_second_moment_bayes / 64.0;
  return {worst >= 0.8 * bound, detail + fmt("; max %.4f vs 0.8 x E[(u*)^2]/J^2 = %.4f", worst, 0.8 * bound)};
}

Outcome tail_decay() {
  const auto t = tail_decay_check(1.0, 20000, {5.0, 10.0, 20.0}, 1201, 100.0, 0.02);
  return {t.strictly_decreasing && t.log_fit.r_squared > 0.9,
          fmt("P = (%.4f, %.4f, %.5f), log-linear slope %.3f, R^2 %.4f", t.exceedance[0].estimate,
              t.exceedance[1].estimate, t.exceedance[2].estimate, t.log_fit.slope, t.log_fit.r_squared)};
}

Outcome determinism() {
  const fs::path config = fs::path(PHASEDIFF_CONFIG_DIR) / "determinism.yaml";
  const fs::path base = fs::temp_directory_path() / "phasediff_acceptance_determinism";
  fs::remove_all(base);
  std::vector<std::string> runs;
  for (const char* workers : {"1", "4"}) {
    ::setenv("PHASEDIFF_WORKERS", workers, 1);
    auto cfg = load_config(config);
    cfg.output.directory = base / workers;
    write_reports(cfg, run_checks(cfg));
    std::string blob;
    for (const char* f : {"report.csv", "report.json", "mc_moments.csv"}) blob += io::read_file(cfg.output.directory / f);
    runs.push_back(blob);
  }
  ::unsetenv("PHASEDIFF_WORKERS");
  fs::remove_all(base);
  const bool same = runs[0] == runs[1];
  return {same, fmt("reports with 1 and 4 workers %s (%zu bytes)", same ? "byte-identical" : "DIFFER",
                    runs[0].size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"limit MLE variance", limit_mle_variance},
      {"limit BE variance and ordering", limit_bayes_variance},
      {"exact Hellinger identities", hellinger_identities},
      {"Hellinger Holder constant", hellinger_holder},
      {"equivariance KS", equivariance},
      {"OU ergodics", ou_ergodics},
      {"bracket approximation", bracket},
      {"martingale CLT covariance", martingale_clt},
      {"finite-n estimator moments", finite_n_moments},
      {"contiguous equivariance", contiguous},
      {"LAM ordering", lam_ordering},
      {"tail decay", tail_decay},
      {"determinism across workers", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s  %2zu  %-32s %s  [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
