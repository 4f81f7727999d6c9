#include <gtest/gtest.h>

#include <cmath>

#include "phasediff/estimators.hpp"
#include "phasediff/limit.hpp"

using namespace phasediff;

TEST(LimitField, ShapeAndDeterminism) {
  const auto f = sample_field(10.0, 0.05, 1.5, 0.0, 3);
  ASSERT_EQ(f.w.size(), 401u);
  EXPECT_EQ(f.center(), 200u);
  EXPECT_EQ(f.w[200], 0.0);
  EXPECT_DOUBLE_EQ(f.u(0), -10.0);
  EXPECT_DOUBLE_EQ(f.u(400), 10.0);
  EXPECT_EQ(f.w, sample_field(10.0, 0.05, 1.5, 0.0, 3).w);
  EXPECT_NE(f.w, sample_field(10.0, 0.05, 1.5, 0.0, 4).w);
  EXPECT_DOUBLE_EQ(f.log_likelihood(400), f.w[400] - 0.75 * 10.0);
}

TEST(LimitField, BranchMomentsWithShift) {
  // mean of w(u) is J (|u0| ^ |u|) on the branch of sign(u0), variance J |u|
  const double J = 2.0, u0 = 3.0;
  std::vector<double> right, left, right_far;
  for (std::uint64_t s = 0; s < 4000; ++s) {
    const auto f = sample_field(8.0, 0.1, J, u0, seed_stream(50, s));
    right.push_back(f.w[f.center() + 20]);      // u = 2
    right_far.push_back(f.w[f.center() + 60]);  // u = 6
    left.push_back(f.w[f.center() - 20]);       // u = -2
  }
  const auto r = stats::summarize(right), rf = stats::summarize(right_far), l = stats::summarize(left);
  EXPECT_NEAR(r.mean, J * 2.0, 3.0 * r.se_mean);
  EXPECT_NEAR(rf.mean, J * 3.0, 3.0 * rf.se_mean);
  EXPECT_NEAR(l.mean, 0.0, 3.0 * l.se_mean);
  EXPECT_NEAR(r.variance, J * 2.0, 3.0 * r.se_variance);
  EXPECT_NEAR(rf.variance, J * 6.0, 3.0 * rf.se_variance);
  EXPECT_NEAR(stats::covariance(right, left), 0.0, 3.0 * stats::covariance_se(right, left));
}

TEST(LimitField, Preconditions) {
  EXPECT_THROW(sample_field(0.0, 0.1, 1.0, 0.0, 1), DomainError);
  EXPECT_THROW(sample_field(10.0, 0.1, -1.0, 0.0, 1), DomainError);
  EXPECT_THROW(sample_field(10.0, 0.1, 1.0, 11.0, 1), DomainError);
  EXPECT_THROW(sample_field(10.0, 0.1, 1.0, 0.05, 1), DomainError);
}

TEST(LimitEstimators, HandBuiltField) {
  LimitField f{{2.0, 1.0}, 1.0, 0.0, {0.0, 3.0, 0.0, 3.0, 0.0}};
  // log L = {-1, 2.5, 0, 2.5, -1}: tie at u = -1 and u = 1, smallest wins
  EXPECT_EQ(limit_mle(f), -1.0);
  const auto e = limit_estimates(f);
  EXPECT_EQ(e.u_hat, -1.0);
  EXPECT_DOUBLE_EQ(e.max_log_l, 2.5);
  EXPECT_NEAR(e.u_star, 0.0, 1e-15);
  bool flag = true;
  limit_mle(f, &flag);
  EXPECT_TRUE(flag);  // within two cells of the edge on this tiny grid
}

TEST(LimitEstimators, PosteriorMeanMatchesDirectSum) {
  const auto f = sample_field(30.0, 0.05, 1.0, 0.0, 9);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < f.w.size(); ++i) {
    const double w = (i == 0 || i + 1 == f.w.size() ? 0.5 : 1.0) * std::exp(f.log_likelihood(i));
    num += w * f.u(i);
    den += w;
  }
  double tail = -1.0;
  EXPECT_NEAR(limit_bayes(f, &tail), num / den, 1e-12);
  EXPECT_GE(tail, 0.0);
  EXPECT_LT(tail, kTailMassLimit);
}

TEST(LimitEstimators, ExactScalingInJ) {
  // (J, du, K) and (1, J du, J K) give the same walk, so u(J) = u(1) / J
  const double J = 4.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = limit_estimates(sample_field(10.0, 0.005, J, 0.0, s));
    const auto b = limit_estimates(sample_field(40.0, 0.02, 1.0, 0.0, s));
    EXPECT_NEAR(a.u_hat, b.u_hat / J, 1e-12);
    EXPECT_NEAR(a.u_star, b.u_star / J, 1e-9);
  }
}

TEST(LimitEstimators, ReplicatesMatchSerialLoop) {
  const LimitGrid g{20.0, 0.1};
  const auto est = limit_replicates(g, 1.0, 2.0, 16, 77);
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto e = limit_estimates(sample_field(20.0, 0.1, 1.0, 2.0, seed_stream(77, i)));
    EXPECT_EQ(est[i].u_hat, e.u_hat);
    EXPECT_EQ(est[i].u_star, e.u_star);
  }
}

TEST(LimitVariance, NearArgmaxAndPitmanConstants) {
  const auto v = limit_variance_study(1.0, 150.0, 0.1, 8000, 11);
  EXPECT_NEAR(v.mean_mle.value, 0.0, 4.0 * v.mean_mle.se);
  EXPECT_NEAR(v.mean_bayes.value, 0.0, 4.0 * v.mean_bayes.se);
  EXPECT_NEAR(v.scaled_var_mle.value, kArgmaxVariance, 4.0 * v.scaled_var_mle.se + 0.5);
  EXPECT_NEAR(v.scaled_var_bayes.value, kPitmanVariance, 4.0 * v.scaled_var_bayes.se + 0.5);
  EXPECT_LT(v.scaled_var_bayes.value, v.scaled_var_mle.value);
  EXPECT_GT(v.used_mle, 7900u);
}

TEST(LimitVariance, TooFewRuns) { EXPECT_THROW(limit_variance_study(1.0, 10.0, 0.1, 1, 1), DomainError); }

TEST(HellingerExact, MatchesClosedForms) {
  for (double d : {0.5, 2.0, 8.0, 30.0}) {
    const auto h = hellinger_exact(1.0, d, 20000, 5);
    EXPECT_NEAR(h.one_minus_sqrt_sq.value, h.closed_one_minus_sqrt_sq, 4.0 * h.one_minus_sqrt_sq.se);
    EXPECT_NEAR(h.sqrt_l.value, h.closed_sqrt_l, 4.0 * h.sqrt_l.se);
    EXPECT_NEAR(h.one_minus_quarter_4.value, h.closed_one_minus_quarter_4, 4.0 * h.one_minus_quarter_4.se);
    EXPECT_DOUBLE_EQ(h.closed_sqrt_l, std::exp(-d / 8.0));
  }
}

TEST(HellingerExact, SmallDeltaSlopeIsJOverEight) {
  for (double J : {1.0, 3.0}) {
    const auto h = hellinger_exact(J, 1e-3, 1000, 6);
    EXPECT_NEAR(h.closed_hellinger_sq_per_delta, J / 8.0, 0.01 * J / 8.0);
  }
  EXPECT_THROW(hellinger_exact(0.0, 1.0, 10, 1), DomainError);
  EXPECT_THROW(hellinger_exact(1.0, 1.0, 1, 1), DomainError);
}

TEST(Equivariance, ShiftedErrorsShareALaw) {
  const auto res = equivariance_check(1.0, {0.0, 3.0, -5.0}, 3000, 21, 150.0, 0.1);
  ASSERT_EQ(res.pairs.size(), 3u);
  EXPECT_EQ(res.pairs[2], (std::pair<std::size_t, std::size_t>{1, 2}));
  for (const auto& ks : res.ks) EXPECT_TRUE(ks.passes(0.001)) << ks.statistic << " p=" << ks.p_value;
  for (const auto& m : res.mean_error) EXPECT_NEAR(m.value, 0.0, 4.0 * m.se);
  EXPECT_THROW(equivariance_check(1.0, {0.0, 40.0}, 10, 1, 150.0, 0.1), DomainError);
}

TEST(KolmogorovSmirnov, ReferenceValues) {
  EXPECT_NEAR(stats::kolmogorov_survival(1.358), 0.05, 5e-4);
  EXPECT_NEAR(stats::kolmogorov_survival(1.6276), 0.01, 1e-4);
  std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  EXPECT_DOUBLE_EQ(stats::ks_two_sample(a, b).statistic, 1.0);
  EXPECT_DOUBLE_EQ(stats::ks_two_sample(a, a).statistic, 0.0);
}

TEST(TailDecay, DecreasingExceedance) {
  const auto t = tail_decay_check(1.0, 4000, {5.0, 10.0, 20.0, 60.0}, 31, 60.0, 0.05);
  ASSERT_EQ(t.exceedance.size(), 4u);
  EXPECT_GT(t.exceedance[0].estimate, t.exceedance[1].estimate);
  EXPECT_GT(t.exceedance[1].estimate, t.exceedance[2].estimate);
  EXPECT_EQ(t.exceedance[3].estimate, 0.0);  // K at the grid edge has an empty supremum
  EXPECT_TRUE(t.strictly_decreasing);
  EXPECT_LT(t.log_fit.slope, 0.0);
  EXPECT_THROW(tail_decay_check(1.0, 10, {5.0, 5.0}, 1), DomainError);
}

TEST(LamTarget, SecondMomentOfPitmanEstimator) {
  const auto e = lam_target(1.0, 6000, 41, 150.0, 0.1);
  EXPECT_NEAR(e.value, kPitmanVariance, 4.0 * e.se + 0.5);
}
