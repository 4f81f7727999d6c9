// Command-line front end: simulation, estimation, Monte Carlo studies, limit
// experiment checks, diagnostics, and config-driven runs.
//
// Exit codes: 0 success / all checks pass, 1 some check failed, 2 usage or
// configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phasediff/harness.hpp"

namespace pd = phasediff;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct ModelArgs {
  std::string config;
  double T = 1.0;
  double a = 0.3;
  double theta = 0.35025;
  std::string lambda = "constant(1.0)";
  std::string lambda_star = "constant(2.0)";
  std::string b = "affine(0,1)";
  std::string sigma = "constant(1)";

  void attach(CLI::App* app) {
    app->add_option("--config", config, "YAML file whose model block defines the model (overrides the flags below)");
    app->add_option("--T", T, "period")->capture_default_str();
    app->add_option("--a", a, "signal duration")->capture_default_str();
    app->add_option("--theta", theta, "phase of the signal")->capture_default_str();
    app->add_option("--lambda", lambda, "baseline input: constant(c) | sinusoid(c0,c1,phase)")->capture_default_str();
    app->add_option("--lambda-star", lambda_star, "burst amplitude, same kinds as --lambda")->capture_default_str();
    app->add_option("--b", b, "drift: affine(beta,gamma) | constant(s) | bounded_rational(s0,s1)")->capture_default_str();
    app->add_option("--sigma", sigma, "diffusion: constant(s) | bounded_rational(s0,s1)")->capture_default_str();
  }

  pd::DiffusionModel build() const {
    if (!config.empty()) {
      const YAML::Node root = YAML::Load(pd::io::read_file(config));
      if (!root["model"]) throw pd::ConfigError("missing model block", "model");
      return pd::detail::parse_model(root["model"]);
    }
    return pd::DiffusionModel(
        pd::SignalSpec(pd::PeriodicFn::parse(lambda, T), pd::PeriodicFn::parse(lambda_star, T), T, a, theta),
        pd::CoefFn::parse(b), pd::CoefFn::parse(sigma));
  }
};

void emit(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-") {
    std::fwrite(content.data(), 1, content.size(), stdout);
  } else {
    pd::io::write_file_atomic(out, content);
  }
}

std::string g17(double v) { return pd::format_g17(v); }

// Runs one registry check with parameters given as YAML text.
std::vector<pd::ReportEntry> run_registry_check(const std::string& name, const std::string& params_yaml,
                                                std::optional<pd::DiffusionModel> model, const pd::RunBlock& run,
                                                std::uint64_t seed, std::map<std::string, std::string>& artifacts) {
  pd::ExperimentConfig cfg;
  cfg.model = std::move(model);
  cfg.run = run;
  pd::CheckRequest req{name, YAML::Load(params_yaml.empty() ? "{}" : params_yaml), 0};
  const pd::CheckParams params(req, cfg.run);
  const pd::CheckContext ctx{cfg, params, seed, artifacts};
  return pd::check_registry().at(name)(ctx);
}

void print_entries(const std::vector<pd::ReportEntry>& entries) {
  for (const auto& e : entries)
    std::fprintf(stderr, "%-60s %s  estimate=%.6g se=%.3g target=%.6g tol=%.3g (%s)\n", e.check_name.c_str(),
                 e.pass ? "PASS" : "FAIL", e.estimate, e.se, e.target, e.tolerance, pd::rule_name(e.rule));
}

bool all_pass(const std::vector<pd::ReportEntry>& entries) {
  for (const auto& e : entries)
    if (!e.pass) return false;
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase estimation for diffusions with a periodic switched signal"};
  app.require_subcommand(1);
  int exit_code = 0;

  // simulate
  ModelArgs sim_model;
  std::size_t sim_periods = 10;
  int sim_steps = 1000;
  std::uint64_t sim_seed = 1;
  double sim_x0 = 0.0;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "Euler path of the model written as CSV");
  sim_model.attach(sim);
  sim->add_option("--n-periods", sim_periods, "number of periods")->capture_default_str();
  sim->add_option("--steps-per-period", sim_steps, "grid steps per period")->capture_default_str();
  sim->add_option("--seed", sim_seed, "random seed")->capture_default_str();
  sim->add_option("--x0", sim_x0, "initial state")->capture_default_str();
  sim->add_option("--out", sim_out, "output CSV (stdout when omitted)");
  sim->callback([&] {
    const auto path = pd::simulate_path(sim_model.build(), sim_x0, sim_periods, sim_steps, sim_seed);
    emit(sim_out, pd::path_to_csv(path));
  });

  // estimate
  std::string est_path, est_out;
  std::optional<double> est_theta;
  auto* est = app.add_subcommand("estimate", "Estimate the phase from a saved path");
  est->require_subcommand(1);
  auto load_path = [&] { return pd::path_from_csv(pd::io::read_file(est_path)); };
  for (const char* kind : {"mle", "bayes"}) {
    auto* sub = est->add_subcommand(kind, std::string(kind == std::string("mle") ? "maximum-likelihood" : "Bayes (uniform prior)") + " estimate");
    sub->add_option("--path", est_path, "path CSV written by 'simulate'")->required();
    sub->callback([&, kind] {
      const auto path = load_path();
      const auto grid = pd::default_zeta_grid(path.model.signal(), path.steps_per_period);
      const double v = std::string(kind) == "mle" ? pd::mle(path, path.model, grid) : pd::bayes(path, path.model, grid);
      std::printf("%s\n", g17(v).c_str());
    });
  }
  auto* curve = est->add_subcommand("curve", "local log-likelihood curve log Z(u) as CSV");
  curve->add_option("--path", est_path, "path CSV written by 'simulate'")->required();
  curve->add_option("--theta", est_theta, "reference phase (default: the path's model theta)");
  curve->add_option("--out", est_out, "output CSV (stdout when omitted)");
  curve->callback([&] {
    const auto path = load_path();
    const double theta = est_theta.value_or(path.model.theta());
    const auto grid = pd::default_u_grid();
    const auto c = pd::local_curve(path, path.model, theta, grid);
    std::string out = "u,logZ\n";
    for (const auto& p : c.points)
      if (p.valid) out += g17(p.parameter) + ',' + g17(p.log_lr) + '\n';
    if (c.excluded) std::fprintf(stderr, "warning: %zu u values outside the parameter space skipped\n", c.excluded);
    emit(est_out, out);
  });

  // mc-study
  ModelArgs mc_model;
  std::optional<double> mc_u;
  std::size_t mc_periods = 150, mc_reps = 200;
  int mc_steps = 2000;
  std::uint64_t mc_seed = 1;
  std::string mc_out;
  auto* mc = app.add_subcommand("mc-study", "Monte Carlo study of the rescaled MLE and Bayes errors");
  mc_model.attach(mc);
  mc->add_option("--n-periods", mc_periods, "periods per path")->capture_default_str();
  mc->add_option("--replicates", mc_reps, "number of paths")->capture_default_str();
  mc->add_option("--contiguous-u", mc_u, "simulate under theta + u/n");
  mc->add_option("--steps-per-period", mc_steps, "grid steps per period")->capture_default_str();
  mc->add_option("--seed", mc_seed, "master seed")->capture_default_str();
  mc->add_option("--out", mc_out, "per-replicate CSV (stdout when omitted)");
  mc->callback([&] {
    const auto m = mc_model.build();
    pd::McStudyOptions opt;
    opt.steps_per_period = mc_steps;
    const auto s = pd::mc_study(m, m.theta(), mc_periods, mc_reps, mc_seed, mc_u, opt);
    emit(mc_out, pd::mc_study_csv(s));
    std::fprintf(stderr,
                 "J=%.6g  mle: mean %.4g var %.4g (limit %.4g) risk %.4g+-%.2g | bayes: mean %.4g var %.4g (limit %.4g) "
                 "risk %.4g+-%.2g\n",
                 s.j, s.mle.summary.mean, s.mle.summary.variance, s.target_var_mle, s.mle.risk.value, s.mle.risk.se,
                 s.bayes.summary.mean, s.bayes.summary.variance, s.target_var_bayes, s.bayes.risk.value,
                 s.bayes.risk.se);
  });

  // limit
  double lim_j = 1.0, lim_k = 150.0, lim_du = 0.02;
  std::optional<std::size_t> lim_reps;
  std::uint64_t lim_seed = 1;
  std::string lim_check = "variance";
  auto* lim = app.add_subcommand("limit", "Checks on the limit experiment; prints a JSON summary");
  lim->add_option("--j", lim_j, "scale J")->capture_default_str();
  lim->add_option("--k", lim_k, "grid half-width K")->capture_default_str();
  lim->add_option("--du", lim_du, "grid step")->capture_default_str();
  lim->add_option("--replicates", lim_reps, "number of fields (check-specific default)");
  lim->add_option("--seed", lim_seed, "master seed")->capture_default_str();
  lim->add_option("--check", lim_check, "variance | hellinger | holder | equivariance | tails | lam")
      ->check(CLI::IsMember({"variance", "hellinger", "holder", "equivariance", "tails", "lam"}))
      ->capture_default_str();
  lim->callback([&] {
    static const std::map<std::string, std::string> names = {
        {"variance", "limit_variance"}, {"hellinger", "hellinger_exact"}, {"holder", "hellinger_holder"},
        {"equivariance", "equivariance"}, {"tails", "tail_decay"},       {"lam", "lam_target"}};
    const std::string name = names.at(lim_check);
    std::ostringstream p;
    p << "{J: " << g17(lim_j);
    if (name != "hellinger_exact" && name != "hellinger_holder") {
      p << ", du: " << g17(lim_du);
      p << (name == "tail_decay" ? ", grid_K: " : ", K: ") << g17(lim_k);
    }
    if (lim_reps) p << ", replicates: " << *lim_reps;
    p << "}";
    std::map<std::string, std::string> artifacts;
    const auto entries = run_registry_check(name, p.str(), std::nullopt, pd::RunBlock{}, lim_seed, artifacts);
    nlohmann::json j;
    j["check"] = lim_check;
    j["results"] = nlohmann::json::array();
    for (const auto& e : entries)
      j["results"].push_back({{"name", e.check_name}, {"estimate", e.estimate}, {"se", e.se},
                              {"target", e.target}, {"pass", e.pass}});
    j["pass"] = all_pass(entries);
    std::printf("%s\n", j.dump(2).c_str());
    if (!all_pass(entries)) exit_code = kExitFail;
  });

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "Diagnostics emitting CSV tables");
  diag->require_subcommand(1);
  ModelArgs dg_model;
  std::size_t dg_periods = 200, dg_reps = 2000;
  int dg_steps = 2000;
  std::uint64_t dg_seed = 1;
  std::string dg_out;
  auto common = [&](CLI::App* sub) {
    dg_model.attach(sub);
    sub->add_option("--n-periods", dg_periods, "periods per path")->capture_default_str();
    sub->add_option("--steps-per-period", dg_steps, "grid steps per period")->capture_default_str();
    sub->add_option("--seed", dg_seed, "seed")->capture_default_str();
    sub->add_option("--out", dg_out, "output CSV (stdout when omitted)");
  };
  auto sim_opts = [&] { return pd::SimulationOptions{dg_steps, 0}; };

  std::string lln_kind = "point_sample", lln_f = "identity";
  double lln_r = 0.0;
  std::optional<double> lln_r_end;
  auto* d_lln = diag->add_subcommand("lln", "running average A_t/t of a periodic functional");
  common(d_lln);
  d_lln->add_option("--functional", lln_kind, "point_sample | interval_integral | dirac_comb")->capture_default_str();
  d_lln->add_option("--f", lln_f, "identity | square | indicator_below(c) | registry coefficient")->capture_default_str();
  d_lln->add_option("--r", lln_r, "phase r")->capture_default_str();
  d_lln->add_option("--r-end", lln_r_end, "window end r' (interval_integral)");
  d_lln->callback([&] {
    const auto m = dg_model.build();
    const auto path = pd::simulate_stationary(m, dg_periods, dg_steps, dg_seed, pd::default_burn_in(m));
    const auto res = pd::lln_functional(path, pd::parse_functional(lln_kind, lln_r, lln_r_end.value_or(m.period())),
                                        pd::Observable::parse(lln_f));
    std::string out = "t,running_average,theoretical_limit\n";
    for (std::size_t k = 0; k < res.times.size(); ++k)
      out += g17(res.times[k]) + ',' + g17(res.running_average[k]) + ',' + g17(res.theoretical_limit) + '\n';
    emit(dg_out, out);
  });

  double br_r = 0.5, br_h = 1.0;
  auto* d_br = diag->add_subcommand("bracket", "bracket approximation lhs / rhs / limit");
  common(d_br);
  d_br->add_option("--r", br_r, "phase r")->capture_default_str();
  d_br->add_option("--window-h", br_h, "window parameter h (nonzero)")->capture_default_str();
  d_br->callback([&] {
    const auto res = pd::bracket_check(dg_model.build(), br_r, br_h, dg_periods, dg_seed, sim_opts());
    if (res.underresolved) std::fprintf(stderr, "warning: fewer than 4 grid points per window\n");
    emit(dg_out, "quantity,value\nlhs," + g17(res.lhs) + "\nrhs," + g17(res.rhs) + "\nlimit," + g17(res.limit) + "\n");
  });

  std::vector<double> clt_r{0.25, 0.75}, clt_h{1.0, 2.0, -1.0};
  auto* d_clt = diag->add_subcommand("clt", "covariance of the local martingales against the block target");
  common(d_clt);
  d_clt->add_option("--r-points", clt_r, "phases r_j")->delimiter(',')->capture_default_str();
  d_clt->add_option("--h-points", clt_h, "window parameters h_i")->delimiter(',')->capture_default_str();
  d_clt->add_option("--replicates", dg_reps, "replicates")->capture_default_str();
  d_clt->callback([&] {
    const auto res = pd::martingale_clt_check(dg_model.build(), clt_r, clt_h, dg_periods, dg_reps, dg_seed, sim_opts());
    if (res.underresolved) std::fprintf(stderr, "warning: fewer than 4 grid points per window\n");
    std::string out = "row,col,empirical,se,target\n";
    for (std::size_t i = 0; i < res.dim; ++i)
      for (std::size_t j = 0; j < res.dim; ++j) {
        const std::size_t k = i * res.dim + j;
        out += std::to_string(i) + ',' + std::to_string(j) + ',' + g17(res.empirical[k]) + ',' +
               g17(res.standard_error[k]) + ',' + g17(res.target[k]) + '\n';
      }
    emit(dg_out, out);
  });

  std::optional<double> hel_zeta;
  double hel_zeta_prime = 0.36;
  auto* d_hel = diag->add_subcommand("hellinger", "Hellinger-type moments of the likelihood ratio");
  common(d_hel);
  d_hel->add_option("--zeta", hel_zeta, "reference phase (default: the model theta)");
  d_hel->add_option("--zeta-prime", hel_zeta_prime, "alternative phase")->capture_default_str();
  d_hel->add_option("--replicates", dg_reps, "replicates")->capture_default_str();
  d_hel->callback([&] {
    const auto m = dg_model.build();
    const double z = hel_zeta.value_or(m.theta());
    const double J = m.ou_type() ? pd::j_theta_analytic(m, z) : 0.0;
    const auto r = pd::hellinger_mc(m, z, hel_zeta_prime, dg_periods, dg_reps, dg_seed, J, sim_opts());
    std::string out = "quantity,estimate,se,limit\n";
    out += "one_minus_sqrt_sq," + g17(r.one_minus_sqrt_sq.value) + ',' + g17(r.one_minus_sqrt_sq.se) + ',' +
           g17(r.limit_one_minus_sqrt_sq) + '\n';
    out += "one_minus_quarter_4," + g17(r.one_minus_quarter_4.value) + ',' + g17(r.one_minus_quarter_4.se) + ',' +
           g17(r.limit_one_minus_quarter_4) + '\n';
    out += "sqrt_l," + g17(r.sqrt_l.value) + ',' + g17(r.sqrt_l.se) + ',' + g17(r.limit_sqrt_l) + '\n';
    out += "l," + g17(r.l.value) + ',' + g17(r.l.se) + ",1\n";
    emit(dg_out, out);
  });

  double fl_t1 = 0.0, fl_lambda = 0.3, fl_eta = 0.6;
  std::vector<double> fl_deltas{0.5, 0.25, 0.125};
  auto* d_fl = diag->add_subcommand("fluctuation", "probability of large fluctuations over short windows");
  common(d_fl);
  d_fl->add_option("--t1", fl_t1, "window start")->capture_default_str();
  d_fl->add_option("--deltas", fl_deltas, "window lengths")->delimiter(',')->capture_default_str();
  d_fl->add_option("--lambda-exp", fl_lambda, "exponent lambda in (0, 1/2)")->capture_default_str();
  d_fl->add_option("--eta-exp", fl_eta, "exponent eta in (1/2, 1 - lambda)")->capture_default_str();
  d_fl->add_option("--replicates", dg_reps, "replicates")->capture_default_str();
  d_fl->callback([&] {
    const auto m = dg_model.build();
    std::string out = "delta,scale,probability,se\n";
    for (std::size_t i = 0; i < fl_deltas.size(); ++i) {
      const double d = fl_deltas[i];
      const auto p = pd::fluctuation_probe(m, fl_t1, d, fl_lambda, fl_eta, dg_reps, pd::seed_stream(dg_seed, i));
      out += g17(d) + ',' + g17(std::pow(1.0 / d, 1.0 - 2.0 * fl_lambda)) + ',' + g17(p.estimate) + ',' + g17(p.se) + '\n';
    }
    emit(dg_out, out);
  });

  // run
  std::string run_path;
  auto* run = app.add_subcommand("run", "Run every check of a YAML config and write reports");
  run->add_option("config", run_path, "config file")->required();
  run->callback([&] {
    const auto res = pd::run_config(run_path);
    print_entries(res.entries);
    if (!res.all_pass()) exit_code = kExitFail;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  } catch (const pd::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const YAML::Exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const pd::DomainError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return exit_code;
}
