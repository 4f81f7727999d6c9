#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "phasediff/estimators.hpp"

using namespace phasediff;

namespace {

DiffusionModel model_with(PeriodicFn lambda_star, CoefFn sigma = CoefFn::constant(1.0), double theta = 0.35025) {
  return DiffusionModel(SignalSpec(PeriodicFn::constant(1.0, 1.0), lambda_star, 1.0, 0.3, theta),
                        CoefFn::affine(0.0, 1.0), sigma);
}

}  // namespace

TEST(Constants, AperyAndVarianceTargets) {
  double zeta3 = 0.0;
  for (int k = 200000; k >= 1; --k) zeta3 += 1.0 / (static_cast<double>(k) * k * k);
  EXPECT_NEAR(kApery, zeta3, 1e-10);
  EXPECT_NEAR(kPitmanVariance, 19.2329, 1e-4);
  EXPECT_EQ(kArgmaxVariance, 26.0);
  EXPECT_LT(kPitmanVariance, kArgmaxVariance);
}

TEST(JTheta, ConstantSigmaClosedForm) {
  EXPECT_DOUBLE_EQ(j_theta_analytic(model_with(PeriodicFn::constant(2.0, 1.0)), 0.35), 8.0);
  EXPECT_DOUBLE_EQ(j_theta_analytic(model_with(PeriodicFn::constant(2.0, 1.0), CoefFn::constant(2.0)), 0.35), 2.0);
  const auto ls = PeriodicFn::sinusoid(2.0, 0.5, 0.3, 1.0);
  const double a0 = 2.0 + 0.5 * std::sin(2.0 * std::numbers::pi * 0.2 + 0.3);
  const double a1 = 2.0 + 0.5 * std::sin(2.0 * std::numbers::pi * 0.5 + 0.3);
  EXPECT_NEAR(j_theta_analytic(model_with(ls), 0.2), a0 * a0 + a1 * a1, 1e-12);
}

TEST(JTheta, StateDependentSigmaMatchesEmpirical) {
  const auto m = model_with(PeriodicFn::constant(2.0, 1.0), CoefFn::bounded_rational(1.0, 0.5));
  const double analytic = j_theta_analytic(m, 0.35);
  EXPECT_GT(analytic, 8.0 / 2.25);
  EXPECT_LT(analytic, 8.0);
  JThetaEmpirical opt;
  opt.n_periods = 2000;
  opt.replicates = 8;
  opt.steps_per_period = 500;
  const auto emp = j_theta_empirical(m, 0.35, opt);
  EXPECT_NEAR(emp.value, analytic, 4.0 * emp.se + 0.01);
}

TEST(JTheta, Preconditions) {
  const DiffusionModel non_ou(SignalSpec(PeriodicFn::constant(1.0, 1.0), PeriodicFn::constant(2.0, 1.0), 1.0, 0.3, 0.2),
                              CoefFn::affine(0.0, 0.0), CoefFn::constant(1.0));
  try {
    j_theta_analytic(non_ou, 0.2);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported"), std::string::npos);
  }
  EXPECT_THROW(j_theta_analytic(model_with(PeriodicFn::constant(2.0, 1.0)), 0.8), DomainError);
}

TEST(ZetaGrid, CellCenters) {
  const SignalSpec sig(PeriodicFn::constant(1.0, 1.0), PeriodicFn::constant(2.0, 1.0), 1.0, 0.3, 0.35);
  const auto g = default_zeta_grid(sig, 2000);
  ASSERT_EQ(g.size(), 1400u);
  EXPECT_DOUBLE_EQ(g.front(), 0.00025);
  EXPECT_NEAR(g.back(), 0.69975, 1e-15);
  EXPECT_DOUBLE_EQ(g[700], 0.35025);
  EXPECT_DOUBLE_EQ(midpoint_of_theta(sig), 0.35);
  const SignalSpec tiny(PeriodicFn::constant(1.0, 1.0), PeriodicFn::constant(2.0, 1.0), 1.0, 0.9997, 0.0001);
  EXPECT_THROW(default_zeta_grid(tiny, 2000), DomainError);
}

TEST(Argmax, SmallestMaximizer) {
  const std::vector<double> grid{0.1, 0.2, 0.3, 0.4};
  EXPECT_EQ(argmax_min(grid, std::vector<double>{1.0, 3.0, 3.0, 2.0}), 0.2);
  EXPECT_EQ(argmax_min(grid, std::vector<double>{5.0, 5.0, 5.0, 5.0}), 0.1);
  EXPECT_THROW(argmax_min(grid, std::vector<double>{1.0}), DomainError);
}

TEST(PosteriorMean, TrapezoidRatio) {
  const std::vector<double> grid{0.0, 1.0, 2.0, 4.0};
  // flat curve: int zeta / int 1 over [0, 4] = 2 for piecewise-linear trapezoid weights
  EXPECT_DOUBLE_EQ(posterior_mean(grid, std::vector<double>(4, -3.0)), (0.5 * 0 + 1.0 * 1 + 1.5 * 2 + 1.0 * 4) / 4.0);
  // symmetric curve around 1 on a uniform grid
  EXPECT_NEAR(posterior_mean(std::vector<double>{0.0, 1.0, 2.0}, std::vector<double>{-1.0, 0.0, -1.0}), 1.0, 1e-15);
  // large offsets do not overflow
  EXPECT_NEAR(posterior_mean(std::vector<double>{0.0, 1.0, 2.0}, std::vector<double>{1e4 - 1.0, 1e4, 1e4 - 1.0}), 1.0,
              1e-15);
  EXPECT_EQ(posterior_mean(std::vector<double>{0.7}, std::vector<double>{-1e9}), 0.7);
  const double ninf = -std::numeric_limits<double>::infinity();
  EXPECT_THROW(posterior_mean(std::vector<double>{0.0, 1.0}, std::vector<double>{ninf, ninf}), NumericError);
}

TEST(Estimators, ConcentrateNearTruthOnLongPaths) {
  const auto m = model_with(PeriodicFn::constant(2.0, 1.0), CoefFn::constant(1.0), 0.3505);
  const auto path = simulate_stationary(m, 1000, 1000, 41, 10);
  const auto grid = default_zeta_grid(m.signal(), 1000);
  // rescaled errors are O(1/J) = O(0.1), so within 0.01 at n = 1000 with overwhelming probability
  EXPECT_NEAR(mle(path, m, grid), 0.3505, 0.01);
  EXPECT_NEAR(bayes(path, m, grid), 0.3505, 0.01);
}

TEST(Estimators, GridValidation) {
  const auto m = model_with(PeriodicFn::constant(2.0, 1.0));
  const auto path = simulate_path(m, 0.0, 5, 100, 1);
  EXPECT_THROW(mle(path, m, std::vector<double>{}), DomainError);
  EXPECT_THROW(mle(path, m, std::vector<double>{0.2, 0.1}), DomainError);
  EXPECT_THROW(bayes(path, m, std::vector<double>{0.2, 0.9}), DomainError);
  EXPECT_NO_THROW(mle(path, m, std::vector<double>{0.0, 0.7}));
}

TEST(McStudy, RecordsDeterminismAndCsv) {
  const auto m = model_with(PeriodicFn::constant(2.0, 1.0));
  McStudyOptions opt;
  opt.steps_per_period = 400;
  const auto a = mc_study(m, 0.35125, 30, 20, 5, std::nullopt, opt);
  const auto b = mc_study(m, 0.35125, 30, 20, 5, std::nullopt, opt);
  ASSERT_EQ(a.records.size(), 20u);
  EXPECT_EQ(mc_study_csv(a), mc_study_csv(b));
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(a.records[i].replicate, i);
    EXPECT_EQ(a.records[i].seed, seed_stream(5, i));
    EXPECT_NEAR(a.records[i].err_mle_rescaled, 30.0 * (a.records[i].theta_hat - 0.35125), 1e-12);
  }
  EXPECT_DOUBLE_EQ(a.j, 8.0);
  EXPECT_DOUBLE_EQ(a.target_var_mle, 26.0 / 64.0);
  EXPECT_DOUBLE_EQ(a.target_var_bayes, kPitmanVariance / 64.0);
  const auto csv = mc_study_csv(a);
  EXPECT_EQ(csv.rfind("replicate,theta_hat,theta_star,err_mle_rescaled,err_be_rescaled\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 21);
}

TEST(McStudy, ContiguousShift) {
  const auto m = model_with(PeriodicFn::constant(2.0, 1.0));
  McStudyOptions opt;
  opt.steps_per_period = 400;
  const auto s = mc_study(m, 0.35125, 40, 4, 6, 2.0, opt);
  EXPECT_DOUBLE_EQ(s.theta_effective, 0.35125 + 2.0 / 40.0);
  for (const auto& r : s.records) EXPECT_DOUBLE_EQ(r.true_theta, s.theta_effective);
  EXPECT_THROW(mc_study(m, 0.35125, 40, 4, 6, 20.0, opt), DomainError);
}

TEST(McStudy, Preconditions) {
  const auto m = model_with(PeriodicFn::constant(2.0, 1.0));
  EXPECT_THROW(mc_study(m, 0.35, 10, 1, 1, std::nullopt), DomainError);
  EXPECT_THROW(mc_study(m, 0.35, 0, 10, 1, std::nullopt), DomainError);
  EXPECT_THROW(mc_study(m, 0.75, 10, 10, 1, std::nullopt), DomainError);
  const auto flat = model_with(PeriodicFn::constant(0.0, 1.0));
  EXPECT_THROW(mc_study(flat, 0.35, 10, 10, 1, std::nullopt), DomainError);
}

TEST(McStudy, ErrorsRoughlyCentredWithExpectedScale) {
  const auto m = model_with(PeriodicFn::constant(2.0, 1.0));
  McStudyOptions opt;
  opt.steps_per_period = 1000;
  const auto s = mc_study(m, 0.3505, 100, 300, 7, std::nullopt, opt);
  EXPECT_NEAR(s.mle.summary.mean, 0.0, 4.0 * s.mle.summary.se_mean);
  EXPECT_NEAR(s.bayes.summary.mean, 0.0, 4.0 * s.bayes.summary.se_mean);
  // variances within a factor of two of 26/J^2 and 16 zeta(3)/J^2
  EXPECT_GT(s.mle.summary.variance, 0.5 * s.target_var_mle);
  EXPECT_LT(s.mle.summary.variance, 2.0 * s.target_var_mle);
  EXPECT_GT(s.bayes.summary.variance, 0.5 * s.target_var_bayes);
  EXPECT_LT(s.bayes.summary.variance, 2.0 * s.target_var_bayes);
}
