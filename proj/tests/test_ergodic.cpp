#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "oracles.hpp"
#include "phasediff/ergodic.hpp"
#include "phasediff/simulate.hpp"

using namespace phasediff;

namespace {

DiffusionModel burst_ou(double T, double a, double theta, PeriodicFn lambda, double lambda_star, double gamma = 1.0,
                        double beta = 0.0, CoefFn sigma = CoefFn::constant(1.0)) {
  return DiffusionModel(SignalSpec(lambda, PeriodicFn::constant(lambda_star, T), T, a, theta),
                        CoefFn::affine(beta, gamma), sigma);
}

}  // namespace

TEST(OuMean, PureBurstClosedForm) {
  // lambda = 0, lambda* = 1 on (4, 7), T = 10: at r = 0 the burst lies 3 to 6 time units back
  const auto ou = OUAnalytic::from_model(burst_ou(10.0, 3.0, 4.0, PeriodicFn::constant(0.0, 10.0), 1.0));
  const double expected = (std::exp(-3.0) - std::exp(-6.0)) / (1.0 - std::exp(-10.0));
  EXPECT_NEAR(ou_mean_folded(ou, 0.0), expected, 1e-12);
  EXPECT_NEAR(ou_mean_truncated(ou, 0.0), expected, 1e-12);
}

TEST(OuMean, FoldedMatchesGeometricOracle) {
  for (double gamma : {0.3, 1.0, 2.5}) {
    const auto model = burst_ou(10.0, 3.0, 4.0, PeriodicFn::sinusoid(1.0, 0.5, 0.2, 10.0), 2.0, gamma, 0.4);
    const auto ou = OUAnalytic::from_model(model);
    for (double r : {0.0, 1.3, 4.0, 5.5, 7.0, 9.99}) {
      const double m = oracle::ou_mean(gamma, 0.4, 10.0, 1.0, 0.5, 0.2, 2.0, 3.0, 4.0, r);
      EXPECT_NEAR(ou_mean_folded(ou, r), m, 1e-10) << gamma << " " << r;
    }
  }
}

TEST(OuMean, TwoRoutesAgree) {
  const auto ou = OUAnalytic::from_model(burst_ou(1.0, 0.3, 0.35, PeriodicFn::sinusoid(1.0, 0.7, 0.0, 1.0), 2.0));
  for (int k = 0; k < 20; ++k) {
    const double r = k / 20.0;
    EXPECT_NEAR(ou_mean_folded(ou, r), ou_mean_truncated(ou, r), 1e-10) << r;
  }
}

TEST(OuMean, PeriodicInPhase) {
  const auto ou = OUAnalytic::from_model(burst_ou(2.0, 0.5, 0.6, PeriodicFn::constant(1.0, 2.0), 2.0));
  EXPECT_NEAR(ou_mean_folded(ou, 0.25), ou_mean_folded(ou, 2.25), 1e-12);
  EXPECT_NEAR(ou_mean_folded(ou, 0.0), ou_mean_folded(ou, 2.0), 1e-12);
}

TEST(OuMean, ConstantInputSteadyState) {
  const auto ou = OUAnalytic::from_model(burst_ou(1.0, 0.3, 0.2, PeriodicFn::constant(3.0, 1.0), 0.0, 2.0, 1.0));
  for (double r : {0.0, 0.4, 0.9}) EXPECT_NEAR(ou_mean_folded(ou, r), 2.0, 1e-12);
}

TEST(OuMoments, StationaryVariance) {
  const auto ou = OUAnalytic::from_model(burst_ou(1.0, 0.3, 0.2, PeriodicFn::constant(1.0, 1.0), 2.0, 0.8, 0.0,
                                                  CoefFn::constant(1.5)));
  EXPECT_DOUBLE_EQ(ou_moments(ou, 0.3).variance, 1.5 * 1.5 / 1.6);
}

TEST(OuMoments, RequiresOuModel) {
  const DiffusionModel m(SignalSpec(PeriodicFn::constant(1.0, 1.0), PeriodicFn::constant(1.0, 1.0), 1.0, 0.3, 0.2),
                         CoefFn::affine(0.0, 0.0), CoefFn::constant(1.0));
  EXPECT_THROW(OUAnalytic::from_model(m), DomainError);
  const auto nonconst = burst_ou(1.0, 0.3, 0.2, PeriodicFn::constant(1.0, 1.0), 2.0, 1.0, 0.0,
                                 CoefFn::bounded_rational(1.0, 0.5));
  EXPECT_THROW(OUAnalytic::from_model(nonconst), DomainError);
}

TEST(Observable, GaussianExpectations) {
  EXPECT_DOUBLE_EQ(Observable::identity().gaussian_expectation(1.5, 2.0), 1.5);
  EXPECT_DOUBLE_EQ(Observable::square().gaussian_expectation(1.5, 2.0), 4.25);
  EXPECT_NEAR(Observable::indicator_below(1.0).gaussian_expectation(1.0, 4.0), 0.5, 1e-15);
  EXPECT_NEAR(Observable::indicator_below(1.0 + 1.959963984540054 * 2.0).gaussian_expectation(1.0, 4.0), 0.975,
              1e-12);
  // E[1 / sigma(X)^2] by quadrature against the Gaussian, checked with a closed
  // form: sigma = 1 + 0.5/(1+x^2) at x = 0 is a point mass in the limit
  const auto inv = Observable::inverse_square(CoefFn::bounded_rational(1.0, 0.5));
  EXPECT_NEAR(inv.gaussian_expectation(0.0, 1e-12), 1.0 / 2.25, 1e-6);
  // coef(affine(1, 2)) = 1 - 2 x has mean 1 - 2 m
  EXPECT_NEAR(Observable::coef(CoefFn::affine(1.0, 2.0)).gaussian_expectation(0.5, 3.0), 0.0, 1e-9);
}

TEST(Observable, Parse) {
  EXPECT_EQ(Observable::parse("identity").kind(), Observable::Kind::kIdentity);
  EXPECT_EQ(Observable::parse("square").kind(), Observable::Kind::kSquare);
  const auto ind = Observable::parse("indicator_below(0.5)");
  EXPECT_EQ(ind(0.4), 1.0);
  EXPECT_EQ(ind(0.6), 0.0);
  const auto inv = Observable::parse("inverse_square(constant(2))");
  EXPECT_DOUBLE_EQ(inv(3.0), 0.25);
  EXPECT_THROW(Observable::parse("nonsense(1)"), DomainError);
}

TEST(PeriodicMarginals, ConstantSigmaMatchesGaussianRoute) {
  const auto model = burst_ou(1.0, 0.3, 0.35, PeriodicFn::constant(1.0, 1.0), 2.0);
  PeriodicMarginals::Options opt;
  opt.cells = 800;
  opt.steps_per_period = 1000;
  const PeriodicMarginals fp(model, opt);
  const auto ou = OUAnalytic::from_model(model);
  for (double r : {0.0, 0.5, 0.8}) {
    const auto m = ou_moments(ou, r);
    EXPECT_NEAR(fp.expectation(Observable::identity(), r), m.mean, 2e-3) << r;
    EXPECT_NEAR(fp.expectation(Observable::square(), r), m.mean * m.mean + m.variance, 5e-3) << r;
  }
}

TEST(PeriodicMarginals, MeanIgnoresSigmaUnderLinearDrift) {
  // E xi solves m' = S + beta - gamma m whatever sigma is
  const auto model = burst_ou(1.0, 0.3, 0.35, PeriodicFn::constant(1.0, 1.0), 2.0, 1.0, 0.0,
                              CoefFn::bounded_rational(1.0, 0.5));
  PeriodicMarginals::Options opt;
  opt.cells = 800;
  opt.steps_per_period = 1000;
  const PeriodicMarginals fp(model, opt);
  const OUAnalytic ou{1.0, 1.0, model.signal(), 0.0};
  for (double r : {0.1, 0.6}) EXPECT_NEAR(fp.expectation(Observable::identity(), r), ou_mean_folded(ou, r), 2e-3);
}

TEST(PeriodicMarginals, InverseSigmaSquaredMatchesSimulation) {
  const auto model = burst_ou(1.0, 0.3, 0.35, PeriodicFn::constant(1.0, 1.0), 2.0, 1.0, 0.0,
                              CoefFn::bounded_rational(1.0, 0.5));
  PeriodicMarginals::Options opt;
  opt.cells = 800;
  opt.steps_per_period = 1000;
  const PeriodicMarginals fp(model, opt);
  const auto path = simulate_stationary(model, 20000, 100, 17, 20);
  const auto inv = Observable::inverse_square(model.sigma());
  std::vector<double> xs;
  for (double x : sample_at_phase(path, 0.5)) xs.push_back(inv(x));
  const auto s = stats::summarize(xs);
  EXPECT_NEAR(fp.expectation_inverse_sigma2(0.5), s.mean, 4.0 * s.se_mean + 2e-3);
}

TEST(EmpiricalInvariant, MatchesOuLaw) {
  const auto model = burst_ou(5.0, 1.5, 2.0, PeriodicFn::constant(1.0, 5.0), 2.0);
  const auto path = simulate_stationary(model, 4000, 500, 21, 20);
  const auto xs = sample_at_phase(path, 3.0);
  const auto law = empirical_invariant(xs, 100);
  EXPECT_EQ(law.samples.size(), xs.size() - 100);
  const auto m = ou_moments(OUAnalytic::from_model(model), 3.0);
  EXPECT_NEAR(law.summary.mean, m.mean, 3.0 * law.summary.se_mean);
  EXPECT_NEAR(law.summary.variance, m.variance, 3.0 * law.summary.se_variance);
  ASSERT_EQ(law.quantiles.size(), 5u);
  EXPECT_NEAR(law.quantiles[2], m.mean, 0.05);
  EXPECT_NEAR(law.quantiles[4] - law.quantiles[0], 2.0 * 1.6448536269514722 * std::sqrt(m.variance), 0.1);
}

TEST(EmpiricalInvariant, ShortChainRejected) {
  std::vector<double> xs(150, 0.0);
  EXPECT_THROW(empirical_invariant(xs, 100), DomainError);
}

TEST(Lln, PointSampleAndDiracCombAgree) {
  const auto model = burst_ou(5.0, 1.5, 2.0, PeriodicFn::constant(1.0, 5.0), 2.0);
  const auto path = simulate_stationary(model, 3000, 1000, 22, 20);
  const auto ps = lln_functional(path, PointSample{2.5}, Observable::identity());
  const auto dc = lln_functional(path, DiracComb{2.5}, Observable::identity());
  EXPECT_EQ(ps.running_average, dc.running_average);
  EXPECT_EQ(ps.times.size(), 3000u);
  EXPECT_DOUBLE_EQ(ps.times.back(), 15000.0);
  const double limit = ou_mean_folded(OUAnalytic::from_model(model), 2.5) / 5.0;
  EXPECT_NEAR(ps.theoretical_limit, limit, 1e-12);
  EXPECT_NEAR(ps.terminal, limit, 4.0 * ps.terminal_se);
}

TEST(Lln, IntervalIntegralConverges) {
  const auto model = burst_ou(5.0, 1.5, 2.0, PeriodicFn::sinusoid(1.0, 0.5, 0.0, 5.0), 2.0);
  const auto path = simulate_stationary(model, 2000, 500, 23, 20);
  const auto res = lln_functional(path, IntervalIntegral{1.0, 4.0}, Observable::square());
  EXPECT_NEAR(res.terminal, res.theoretical_limit, 4.0 * res.terminal_se + 2e-3);
  // the oracle is (1/T) int_1^4 (M(s)^2 + 1/2) ds
  double acc = 0.0;
  const int m = 3000;
  for (int k = 0; k < m; ++k) {
    const double s = 1.0 + 3.0 * (k + 0.5) / m;
    const double M = oracle::ou_mean(1.0, 0.0, 5.0, 1.0, 0.5, 0.0, 2.0, 1.5, 2.0, s);
    acc += (M * M + 0.5) * 3.0 / m;
  }
  EXPECT_NEAR(res.theoretical_limit, acc / 5.0, 1e-5);
}

TEST(Lln, Preconditions) {
  const auto model = burst_ou(5.0, 1.5, 2.0, PeriodicFn::constant(1.0, 5.0), 2.0);
  const auto short_path = simulate_path(model, 0.0, 10, 100, 1);
  EXPECT_THROW(lln_functional(short_path, PointSample{0.0}, Observable::identity()), DomainError);
  const auto path = simulate_path(model, 0.0, 60, 100, 1);
  EXPECT_THROW(lln_functional(path, PointSample{0.01}, Observable::identity()), DomainError);
  EXPECT_THROW(lln_functional(path, IntervalIntegral{3.0, 2.0}, Observable::identity()), DomainError);
  EXPECT_THROW(parse_functional("bogus", 0.0, 1.0), DomainError);
  EXPECT_TRUE(std::holds_alternative<IntervalIntegral>(parse_functional("interval_integral", 0.0, 1.0)));
}

TEST(Lln, NoOracleForNonOuModels) {
  const DiffusionModel m(SignalSpec(PeriodicFn::constant(1.0, 1.0), PeriodicFn::constant(1.0, 1.0), 1.0, 0.3, 0.2),
                         CoefFn::affine(0.0, 0.0), CoefFn::constant(1.0));
  const auto path = simulate_path(m, 0.0, 60, 100, 2);
  EXPECT_TRUE(std::isnan(lln_functional(path, PointSample{0.5}, Observable::identity()).theoretical_limit));
}
