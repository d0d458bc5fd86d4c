#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mzoib/errors.hpp"
#include "mzoib/model.hpp"
#include "mzoib/numkit.hpp"

using namespace mzoib;

namespace {

Theta truth_theta(const DesignSet& d) {
  Theta th = Theta::zeros(d);
  th.beta1(0) = 2.944;
  th.beta2(0) = -2.197;
  th.beta3 << 0.847, -0.01, -0.5, -0.3;
  th.beta4(0) = std::log(20.0);
  th.beta4(1) = std::log(33.0 / 20.0);
  return th;
}

double logistic_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(ItsDesign, IdentityRows) {
  ItsConfig cfg{5, 3, 3.0, TimeTransform::identity, true};
  const DesignSet d = its_design(cfg);
  Eigen::MatrixXd expect(5, 4);
  expect << 1, 1, 0, 0, 1, 2, 0, 0, 1, 3, 1, 0, 1, 4, 1, 1, 1, 5, 1, 2;
  EXPECT_TRUE(d.x3.isApprox(expect));
  EXPECT_EQ(d.x1, Eigen::MatrixXd::Ones(5, 1));
  EXPECT_EQ(d.x2, Eigen::MatrixXd::Ones(5, 1));
  ASSERT_EQ(d.x4.cols(), 2);
  EXPECT_EQ(d.x4.col(1), expect.col(2));
  EXPECT_EQ(d.n_params(), 8);
  const std::vector<std::string> x3names{"intercept", "time", "level_change", "trend_change"};
  EXPECT_EQ(d.column_names[2], x3names);
}

TEST(ItsDesign, LogTransformAndOptions) {
  ItsConfig cfg{10, 4, 4.0, TimeTransform::log, false};
  const DesignSet d = its_design(cfg);
  EXPECT_NEAR(d.x3(3, 1), std::log(4.0), 1e-15);
  EXPECT_EQ(d.x3(3, 2), 1.0);
  EXPECT_EQ(d.x3(3, 3), 0.0);
  EXPECT_EQ(d.x3(2, 2), 0.0);
  EXPECT_NEAR(d.x3(9, 3), std::log(10.0) - std::log(4.0), 1e-15);
  EXPECT_EQ(d.x4.cols(), 1);
  EXPECT_THROW(transform_time(0.0, TimeTransform::log), ConfigError);
}

TEST(ItsDesign, ChangePointForOddLength) {
  const int n = 61;
  const double t0 = (n + 1) / 2.0;
  EXPECT_EQ(t0, 31.0);
  ItsConfig cfg{n, n / 2 + 1, t0, TimeTransform::log, true};
  const DesignSet d = its_design(cfg);
  // first post-change row is t = 31 (row index 30)
  EXPECT_EQ(d.x3(29, 2), 0.0);
  EXPECT_EQ(d.x3(30, 2), 1.0);
}

TEST(ItsDesign, ExplicitTimesAndCovariates) {
  ItsConfig cfg{4, 5, 5.0, TimeTransform::identity, true};
  const std::vector<double> times{2.0, 4.0, 5.0, 7.5};
  Eigen::MatrixXd extra(4, 1);
  extra << 0.1, 0.2, 0.3, 0.4;
  const DesignSet d = its_design(cfg, times, extra, {"temp"});
  ASSERT_EQ(d.x3.cols(), 5);
  EXPECT_EQ(d.x3(3, 3), 2.5);
  EXPECT_EQ(d.x3(2, 2), 1.0);
  EXPECT_EQ(d.x3(1, 2), 0.0);
  EXPECT_EQ(d.x3(2, 4), 0.3);
  EXPECT_EQ(d.column_names[2].back(), "temp");
  const std::vector<double> unsorted{1.0, 3.0, 2.0, 8.0};
  EXPECT_THROW(its_design(cfg, unsorted), ConfigError);
}

TEST(ItsDesign, RejectsBadChangePoint) {
  EXPECT_THROW(its_design(ItsConfig{10, 1, 1.0}), ConfigError);
  EXPECT_THROW(its_design(ItsConfig{10, 10, 1.0}), ConfigError);
  EXPECT_THROW(its_design(ItsConfig{2, 2, 1.0}), ConfigError);
}

TEST(Theta, FlattenRoundTripAndNames) {
  const DesignSet d = its_design(ItsConfig{20, 11, 10.5, TimeTransform::identity, true});
  Theta th = truth_theta(d);
  const Eigen::VectorXd flat = th.flatten();
  ASSERT_EQ(flat.size(), 8);
  EXPECT_EQ(flat(2), 0.847);
  EXPECT_EQ(block_offset(d, 2), 2);
  EXPECT_EQ(block_offset(d, 3), 6);
  const Theta back = Theta::unflatten(flat, d);
  EXPECT_EQ(back.beta3, th.beta3);
  EXPECT_EQ(back.beta4, th.beta4);
  const auto names = parameter_names(d);
  EXPECT_EQ(names[0], "beta1_0");
  EXPECT_EQ(names[5], "beta3_3");
  EXPECT_EQ(names[7], "beta4_1");
  EXPECT_THROW(Theta::unflatten(Eigen::VectorXd::Zero(7), d), ShapeError);
}

TEST(LinearPredictors, ZeroThetaAndStudyIntercepts) {
  const DesignSet d = its_design(ItsConfig{20, 11, 10.5, TimeTransform::identity, true});
  const Theta z = Theta::zeros(d);
  for (Eigen::Index t = 0; t < 20; ++t) {
    const auto eta = linear_predictors(z, d, t);
    EXPECT_EQ(eta.eta1, 0.0);
    EXPECT_EQ(eta.eta2, 0.0);
    EXPECT_EQ(eta.eta3, 0.0);
    EXPECT_EQ(eta.eta4, 0.0);
  }
  const Theta th = truth_theta(d);
  const PerTimeParams ps = per_time_params(th, d);
  EXPECT_NEAR(ps.params[0].p1, 0.95, 5e-5);
  EXPECT_NEAR(ps.params[0].p2, 0.1, 5e-5);
  EXPECT_NEAR(ps.params[0].phi, 20.0, 1e-12);
  EXPECT_NEAR(ps.params[15].phi, 33.0, 1e-12);
  Theta bad = th;
  bad.beta3.resize(3);
  EXPECT_THROW(linear_predictors(bad, d, 0), ShapeError);
  EXPECT_THROW(per_time_params(bad, d), ShapeError);
}

TEST(PerTimeParams, ClosedFormMatchesMarginalInversion) {
  const DesignSet d = its_design(ItsConfig{30, 16, 15.5, TimeTransform::identity, true});
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  int feasible_seen = 0, infeasible_seen = 0;
  for (int r = 0; r < 100; ++r) {
    Theta th = Theta::zeros(d);
    th.beta1(0) = 2.0 + nd(gen);
    th.beta2(0) = -2.0 + nd(gen);
    th.beta3 << nd(gen), 0.05 * nd(gen), 0.5 * nd(gen), 0.05 * nd(gen);
    th.beta4 << 2.0 + nd(gen), 0.3 * nd(gen);
    const PerTimeParams ps = per_time_params(th, d);
    for (Eigen::Index t = 0; t < 30; ++t) {
      const auto eta = linear_predictors(th, d, t);
      const double p1 = logistic_ref(eta.eta1), p2 = logistic_ref(eta.eta2), v = logistic_ref(eta.eta3);
      const double mu = mu_from_marginal(v, p1, p2);
      const auto& p = ps.params[static_cast<std::size_t>(t)];
      EXPECT_NEAR(conditional_mean(eta), mu, 1e-12 * std::max(1.0, std::abs(mu)));
      EXPECT_NEAR(p.p1, p1, 1e-15);
      EXPECT_NEAR(p.p2, p2, 1e-15);
      EXPECT_NEAR(ps.marginal_mean[static_cast<std::size_t>(t)], v, 1e-15);
      EXPECT_NEAR(p.phi, std::exp(eta.eta4), 1e-12 * p.phi);
      const bool ok = mu > 0.0 && mu < 1.0;
      EXPECT_EQ(static_cast<bool>(ps.feasible[static_cast<std::size_t>(t)]), ok);
      (ok ? feasible_seen : infeasible_seen)++;
    }
  }
  EXPECT_GT(feasible_seen, 0);
  EXPECT_GT(infeasible_seen, 0);
}

TEST(PerTimeParams, NearOneLimit) {
  const DesignSet d = its_design(ItsConfig{10, 6, 5.5, TimeTransform::identity, true});
  Theta th = Theta::zeros(d);
  th.beta1(0) = 30.0;
  th.beta2(0) = -1.0;
  th.beta3(0) = 0.4;
  const PerTimeParams ps = per_time_params(th, d);
  const double p2 = logistic_ref(-1.0), v = logistic_ref(0.4);
  EXPECT_NEAR(ps.params[0].mu, (v - p2) / (1.0 - p2), 1e-12);
}

TEST(PerTimeParams, StudyTruthFeasible) {
  const DesignSet d = its_design(ItsConfig{60, 31, 30.5, TimeTransform::log, true});
  const PerTimeParams ps = per_time_params(truth_theta(d), d);
  EXPECT_TRUE(ps.all_feasible());
  EXPECT_TRUE(ps.infeasible_indices().empty());
  for (const auto& p : ps.params) {
    EXPECT_GT(p.mu, 0.0);
    EXPECT_LT(p.mu, 1.0);
  }
}

TEST(PerTimeParams, InterceptMonotone) {
  const DesignSet d = its_design(ItsConfig{40, 21, 20.5, TimeTransform::log, true});
  Theta lo = truth_theta(d), hi = lo;
  hi.beta3(0) += 0.1;
  const PerTimeParams a = per_time_params(lo, d), b = per_time_params(hi, d);
  for (std::size_t t = 0; t < 40; ++t) EXPECT_GT(b.marginal_mean[t], a.marginal_mean[t]);
  const PerTimeParams again = per_time_params(lo, d);
  for (std::size_t t = 0; t < 40; ++t) EXPECT_EQ(again.params[t].mu, a.params[t].mu);
}

TEST(DesignSet, Validation) {
  DesignSet d = its_design(ItsConfig{8, 4, 4.0});
  EXPECT_NO_THROW(d.validate());
  DesignSet short_rows = d;
  short_rows.x2 = Eigen::MatrixXd::Ones(7, 1);
  EXPECT_THROW(short_rows.validate(), ShapeError);
  DesignSet nan = d;
  nan.x3(2, 1) = NAN;
  EXPECT_ANY_THROW(nan.validate());
}
