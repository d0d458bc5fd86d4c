#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mzoib/errors.hpp"
#include "mzoib/infer.hpp"
#include "mzoib/numkit.hpp"
#include "mzoib/simulate.hpp"
#include "oracles.hpp"

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

DesignSet design_at(int n, int tau) {
  return its_design(ItsConfig{n, tau, (n + 1) / 2.0, TimeTransform::log, true});
}

DesignSet study_design(int n) { return design_at(n, n / 2 + 1); }

Eigen::VectorXd iid_series(const PerTimeParams& ps, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(1e-12, 1.0 - 1e-12);
  Eigen::VectorXd y(static_cast<Eigen::Index>(ps.params.size()));
  for (Eigen::Index t = 0; t < y.size(); ++t) y(t) = zoib_quantile(u(gen), ps.params[static_cast<std::size_t>(t)]);
  return y;
}

Eigen::VectorXd gaussian_series(const PerTimeParams& ps, double rho, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd y(static_cast<Eigen::Index>(ps.params.size()));
  double z = nd(gen);
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    if (t > 0) z = rho * z + std::sqrt(1 - rho * rho) * nd(gen);
    const double u = std::clamp(0.5 * std::erfc(-z / std::sqrt(2.0)), 1e-12, 1 - 1e-12);
    y(t) = zoib_quantile(u, ps.params[static_cast<std::size_t>(t)]);
  }
  return y;
}

struct Fitted {
  DesignSet d;
  Eigen::VectorXd y;
  StageOneFit fit;
};

Fitted fitted(int n, double rho, unsigned seed) {
  Fitted f{study_design(n), {}, {}};
  f.y = gaussian_series(per_time_params(truth_theta(f.d), f.d), rho, seed);
  f.fit = fit_stage1(f.d, f.y);
  return f;
}

}  // namespace

TEST(Hac, BandwidthAndWeights) {
  EXPECT_EQ(HacConfig{}.resolve(100), 4);
  EXPECT_EQ(HacConfig{}.resolve(2000), static_cast<int>(std::floor(4 * std::pow(20.0, 2.0 / 9.0))));
  EXPECT_EQ(HacConfig{}.resolve(60), 3);
  EXPECT_EQ(HacConfig{2}.resolve(2000), 2);
  const std::vector<double> w = bartlett_weights(4);
  const std::vector<double> expect{1, .8, .6, .4, .2, 0};
  ASSERT_EQ(w.size(), expect.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], expect[i], 1e-15);
  EXPECT_EQ(bartlett_weights(0), (std::vector<double>{1.0, 0.0}));
}

TEST(Hac, LagZeroIsOuterProduct) {
  const Fitted f = fitted(120, 0.5, 1);
  const Eigen::MatrixXd u = score_contributions(f.fit.theta_hat.flatten(), f.d, f.y);
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(u.cols(), u.cols());
  for (Eigen::Index t = 0; t < u.rows(); ++t) outer += u.row(t).transpose() * u.row(t);
  outer /= static_cast<double>(u.rows());
  EXPECT_LE((variability_matrix(u, 0) - outer).cwiseAbs().maxCoeff(), 1e-12);
  const CovarianceEstimate c = hac_covariance(f.fit, f.d, f.y, HacConfig{0});
  EXPECT_LE((c.j_hat - outer).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Hac, LaggedSumMatchesDirectDefinition) {
  const Fitted f = fitted(80, 0.5, 2);
  const Eigen::MatrixXd u = score_contributions(f.fit.theta_hat.flatten(), f.d, f.y);
  const int lag = 3;
  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(u.cols(), u.cols());
  for (Eigen::Index t = 0; t < u.rows(); ++t) {
    for (Eigen::Index s = 0; s < u.rows(); ++s) {
      const double w = std::max(0.0, 1.0 - std::abs(static_cast<double>(t - s)) / (lag + 1));
      ref += w * u.row(t).transpose() * u.row(s);
    }
  }
  ref /= static_cast<double>(u.rows());
  EXPECT_LE((variability_matrix(u, lag) - ref).cwiseAbs().maxCoeff(), 1e-10 * ref.cwiseAbs().maxCoeff());
}

TEST(Hac, PsdAndSymmetric) {
  const Fitted f = fitted(120, 0.5, 3);
  const Eigen::MatrixXd u = score_contributions(f.fit.theta_hat.flatten(), f.d, f.y);
  for (int lag = 0; lag <= 12; ++lag) {
    const Eigen::MatrixXd j = variability_matrix(u, lag);
    EXPECT_LE((j - j.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10) << lag;
  }
  const CovarianceEstimate c = hac_covariance(f.fit, f.d, f.y);
  EXPECT_LE((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.cov);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
  EXPECT_EQ(c.max_lag, 4);
}

TEST(Hac, SensitivityMatchesLoglikHessian) {
  const Fitted f = fitted(120, 0.0, 4);
  const Eigen::VectorXd x = f.fit.theta_hat.flatten();
  const Eigen::Index p = x.size();
  const double h = 1e-4;
  Eigen::MatrixXd hess(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      auto at = [&](double di, double dj) {
        Eigen::VectorXd z = x;
        z(i) += di;
        z(j) += dj;
        return composite_loglik(z, f.d, f.y);
      };
      hess(i, j) = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h);
    }
  }
  const Eigen::MatrixXd ref = -hess / 120.0;
  const Eigen::MatrixXd hh = sensitivity_matrix(x, f.d, f.y);
  EXPECT_LE((hh - ref).cwiseAbs().maxCoeff(), 1e-4 * ref.cwiseAbs().maxCoeff());
}

TEST(Hac, SingularSensitivityNamesDirection) {
  const int n = 80;
  DesignSet d = study_design(n);
  Eigen::MatrixXd x3(n, 5);
  x3 << d.x3, d.x3.col(1);
  d.x3 = x3;
  d.column_names[2].push_back("time_copy");
  const Eigen::VectorXd y = iid_series(per_time_params(truth_theta(study_design(n)), study_design(n)), 5);
  StageOneFit fit;
  Theta th = truth_theta(study_design(n));
  th.beta3.conservativeResize(5);
  th.beta3(4) = 0.0;
  fit.theta_hat = th;
  fit.converged = true;
  try {
    hac_covariance(fit, d, y);
    FAIL() << "expected a singular sensitivity matrix";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("beta3_1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("beta3_4"), std::string::npos) << msg;
  }
}

TEST(Hac, IidStandardErrorsMatchMonteCarlo) {
  const int n = 2000, reps = 500;
  const DesignSet d = study_design(n);
  const PerTimeParams ps = per_time_params(truth_theta(d), d);
  std::vector<Eigen::VectorXd> est, se;
  for (int r = 0; r < reps; ++r) {
    const Eigen::VectorXd y = iid_series(ps, 10000 + static_cast<unsigned>(r));
    const StageOneFit fit = fit_stage1(d, y);
    if (!fit.converged) continue;
    est.push_back(fit.theta_hat.flatten());
    se.push_back(hac_covariance(fit, d, y).std_errors());
  }
  ASSERT_GE(est.size(), 490u);
  const auto names = parameter_names(d);
  const double k = static_cast<double>(est.size());
  for (Eigen::Index i = 0; i < d.n_params(); ++i) {
    double m = 0, mse = 0;
    for (std::size_t r = 0; r < est.size(); ++r) {
      m += est[r](i);
      mse += se[r](i);
    }
    m /= k;
    mse /= k;
    double ss = 0;
    for (const auto& e : est) ss += (e(i) - m) * (e(i) - m);
    const double sd = std::sqrt(ss / (k - 1));
    EXPECT_GE(mse / sd, 0.85) << names[static_cast<std::size_t>(i)];
    EXPECT_LE(mse / sd, 1.15) << names[static_cast<std::size_t>(i)];
  }
}

TEST(Bootstrap, DeterministicAndWorkerIndependent) {
  const Fitted f = fitted(60, 0.5, 6);
  const StageTwoFit f2 = fit_stage2_copula(CopulaKind::gaussian, f.fit.theta_hat, f.d, f.y);
  const CovarianceEstimate a = bootstrap_se(f.fit, f2, f.d, BootstrapConfig{40, 9, 0, 1});
  const CovarianceEstimate b = bootstrap_se(f.fit, f2, f.d, BootstrapConfig{40, 9, 0, 1});
  const CovarianceEstimate c = bootstrap_se(f.fit, f2, f.d, BootstrapConfig{40, 9, 0, 4});
  EXPECT_EQ(a.cov, b.cov);
  EXPECT_EQ(a.cov, c.cov);
  EXPECT_EQ(a.replicates_used + a.replicates_failed, 40);
  const CovarianceEstimate other = bootstrap_se(f.fit, f2, f.d, BootstrapConfig{40, 10, 0, 1});
  EXPECT_NE(a.cov, other.cov);
  EXPECT_THROW(bootstrap_se(f.fit, f2, f.d, BootstrapConfig{1, 9, 0, 1}), ConfigError);
}

TEST(Bootstrap, TwoReplicates) {
  const Fitted f = fitted(60, 0.5, 7);
  const StageTwoFit f2 = fit_stage2_copula(CopulaKind::gaussian, f.fit.theta_hat, f.d, f.y);
  const BootstrapConfig cfg{2, 3, 5, 1};
  const CovarianceEstimate c = bootstrap_se(f.fit, f2, f.d, cfg);
  ASSERT_EQ(c.replicates_used, 2);
  // rebuild the two refits from their documented streams
  std::vector<Eigen::VectorXd> est;
  for (std::uint64_t b = 0; b < 2; ++b) {
    RngStream rng(3, RngStream::nested_id(5, 1000 + b));
    const Eigen::VectorXd yb = markov_series(per_time_params(f.fit.theta_hat, f.d), {f2.family, f2.rho_hat}, rng);
    est.push_back(fit_stage1(f.d, yb, f.fit.theta_hat).theta_hat.flatten());
  }
  const Eigen::VectorXd diff = est[0] - est[1];
  const Eigen::VectorXd sd = diff.cwiseAbs() / std::sqrt(2.0);
  EXPECT_LE((c.std_errors() - sd).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Bootstrap, AgreesWithHacUnderIndependence) {
  // a single sandwich estimate carries 5-10% noise of its own, so the ratio is
  // averaged (on the log scale) over a few independent series
  const int n = 2000, sets = 5;
  const DesignSet d = study_design(n);
  const PerTimeParams ps = per_time_params(truth_theta(d), d);
  Eigen::VectorXd log_ratio = Eigen::VectorXd::Zero(d.n_params());
  for (int s = 0; s < sets; ++s) {
    const Eigen::VectorXd y = iid_series(ps, 77 + static_cast<unsigned>(s));
    const StageOneFit fit = fit_stage1(d, y);
    ASSERT_TRUE(fit.converged);
    StageTwoFit f2;
    f2.family = CopulaKind::gaussian;
    f2.rho_hat = 0.0;
    const Eigen::VectorXd boot =
        bootstrap_se(fit, f2, d, BootstrapConfig{200, 11, static_cast<std::uint64_t>(s), 1}).std_errors();
    const Eigen::VectorXd hac = hac_covariance(fit, d, y, HacConfig{0}).std_errors();
    log_ratio += (boot.array() / hac.array()).log().matrix() / sets;
  }
  const auto names = parameter_names(d);
  for (Eigen::Index i = 0; i < log_ratio.size(); ++i) {
    EXPECT_NEAR(std::exp(log_ratio(i)), 1.0, 0.15) << names[static_cast<std::size_t>(i)];
  }
}

TEST(Wald, OneDimensionalReduction) {
  Eigen::VectorXd th(3);
  th << 0.4, -1.2, 0.0;
  Eigen::MatrixXd v(3, 3);
  v << 0.04, 0.01, 0.0, 0.01, 0.09, 0.02, 0.0, 0.02, 0.16;
  for (int j = 0; j < 3; ++j) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(1, 3);
    a(0, j) = 1.0;
    const WaldTest w = wald_test(th, v, a);
    EXPECT_NEAR(w.statistic, th(j) * th(j) / v(j, j), 1e-14);
    EXPECT_EQ(w.df, 1);
    EXPECT_NEAR(w.p_value, std::erfc(std::sqrt(w.statistic / 2.0)), 1e-12);
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(1, 3);
  a(0, 2) = 1.0;
  const WaldTest zero = wald_test(th, v, a);
  EXPECT_EQ(zero.statistic, 0.0);
  EXPECT_EQ(zero.p_value, 1.0);
  EXPECT_FALSE(zero.reject);
  a(0, 2) = 0.0;
  a(0, 1) = 1.0;
  const WaldTest big = wald_test(th, v, a);
  EXPECT_TRUE(big.reject);
  EXPECT_EQ(big.reject, big.statistic > numkit::chi_square_quantile(0.95, 1));
}

TEST(Wald, RowScalingInvariance) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.01, 100.0);
  for (int r = 0; r < 50; ++r) {
    Eigen::MatrixXd l(5, 5);
    for (Eigen::Index i = 0; i < 25; ++i) l(i) = nd(gen);
    const Eigen::MatrixXd v = l * l.transpose() + 0.1 * Eigen::MatrixXd::Identity(5, 5);
    Eigen::VectorXd th(5);
    for (Eigen::Index i = 0; i < 5; ++i) th(i) = nd(gen);
    Eigen::MatrixXd a(2, 5);
    for (Eigen::Index i = 0; i < 10; ++i) a(i) = nd(gen);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
    s(0, 0) = pos(gen);
    s(1, 1) = pos(gen);
    const double w1 = wald_test(th, v, a).statistic, w2 = wald_test(th, v, s * a).statistic;
    EXPECT_NEAR(w1, w2, 1e-8 * std::max(1.0, w1));
  }
}

TEST(Wald, ItsHypothesesAndErrors) {
  const DesignSet d = study_design(60);
  const Eigen::MatrixXd lv = its_constraint(d, ItsHypothesis::level);
  const Eigen::MatrixXd tr = its_constraint(d, ItsHypothesis::trend);
  const Eigen::MatrixXd jt = its_constraint(d, ItsHypothesis::level_and_trend);
  const Eigen::Index off = block_offset(d, 2);
  EXPECT_EQ(lv.rows(), 1);
  EXPECT_EQ(lv(0, off + 2), 1.0);
  EXPECT_EQ(lv.sum(), 1.0);
  EXPECT_EQ(tr(0, off + 3), 1.0);
  EXPECT_EQ(jt.rows(), 2);
  const Eigen::VectorXd th = truth_theta(d).flatten();
  const Eigen::MatrixXd v = 0.01 * Eigen::MatrixXd::Identity(8, 8);
  EXPECT_EQ(wald_test(th, v, lv).df, 1);
  EXPECT_EQ(wald_test(th, v, tr).df, 1);
  EXPECT_EQ(wald_test(th, v, jt).df, 2);
  EXPECT_EQ(to_string(ItsHypothesis::level), "level_change");

  Eigen::MatrixXd dup(2, 8);
  dup << lv, lv;
  EXPECT_THROW(wald_test(th, v, dup), ConfigError);
  Eigen::MatrixXd sing = v;
  sing(off + 2, off + 2) = 0.0;
  EXPECT_THROW(wald_test(th, sing, lv), NumericalError);
  EXPECT_THROW(wald_test(th, v, Eigen::MatrixXd::Ones(1, 7)), ShapeError);
}

TEST(ConfidenceIntervals, HalfWidthAndReportedInterval) {
  const double z = oracle::bisect([](double x) { return oracle::phi_series(x) - 0.975; }, 0.0, 5.0);
  EXPECT_NEAR(z, 1.959963984540054, 1e-12);
  Eigen::VectorXd est(3), se(3);
  est << 0.512, -1.0, 3.0;
  se << 0.2227, 0.5, 0.0;
  const auto ci = confidence_intervals(est, se);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR((ci[i].upper - ci[i].lower) / 2.0, z * se(i), 1e-12);
    EXPECT_NEAR((ci[i].upper + ci[i].lower) / 2.0, est(i), 1e-14);
  }
  EXPECT_EQ(ci[2].lower, 3.0);
  EXPECT_EQ(ci[2].upper, 3.0);

  // a reported interval (0.075, 0.948) around 0.512
  const double half = (0.948 - 0.075) / 2.0;
  const double se_reported = half / z;
  EXPECT_NEAR(se_reported, 0.2227, 5e-5);
  Eigen::VectorXd p(1), s(1);
  p << 0.512;
  s << std::round(se_reported * 1e4) / 1e4;
  const auto re = confidence_intervals(p, s);
  EXPECT_NEAR(re[0].lower, 0.075, 1e-3);
  EXPECT_NEAR(re[0].upper, 0.948, 1e-3);
  EXPECT_NEAR((re[0].upper - re[0].lower) / 2.0, half, 5e-4);

  Eigen::VectorXd bad(1);
  bad << -0.1;
  EXPECT_THROW(confidence_intervals(p, bad), DomainError);
  const auto ci90 = confidence_intervals(p, s, 0.10);
  EXPECT_NEAR(ci90[0].upper - 0.512, numkit::normal_quantile(0.95) * s(0), 1e-14);
}

TEST(ChangePoint, SingleDuplicateAndPermutation) {
  const int n = 80;
  const DesignSet truth_d = design_at(n, 41);
  const Eigen::VectorXd y = gaussian_series(per_time_params(truth_theta(truth_d), truth_d), 0.2, 40);
  auto make = [&](int tau) { return design_at(n, tau); };

  const ChangePointSelection one = select_changepoint(make, y, {41});
  EXPECT_EQ(one.selected_tau, 41);
  ASSERT_EQ(one.cbic_values.size(), 1u);
  EXPECT_TRUE(std::isfinite(one.cbic_values[0]));
  EXPECT_NEAR(one.details[0].cbic, -one.details[0].loglik + std::log(n) * one.details[0].penalty, 1e-9);

  const ChangePointSelection dup = select_changepoint(make, y, {39, 41, 41});
  EXPECT_EQ(dup.cbic_values[1], dup.cbic_values[2]);

  const std::vector<int> cands{37, 38, 39, 40, 41, 42, 43, 44, 45};
  const ChangePointSelection base = select_changepoint(make, y, cands);
  const double best = *std::min_element(base.cbic_values.begin(), base.cbic_values.end());
  const auto pos = std::find(base.candidates.begin(), base.candidates.end(), base.selected_tau) - base.candidates.begin();
  EXPECT_EQ(base.cbic_values[static_cast<std::size_t>(pos)], best);
  std::vector<int> shuffled = cands;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
  EXPECT_EQ(select_changepoint(make, y, shuffled).selected_tau, base.selected_tau);
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(select_changepoint(make, y, shuffled, {}, {}, 3).selected_tau, base.selected_tau);

  CbicOptions doubled;
  doubled.doubled_loglik = true;
  const ChangePointSelection d2 = select_changepoint(make, y, cands, {}, doubled);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    EXPECT_NEAR(d2.cbic_values[i], -2 * base.details[i].loglik + std::log(n) * base.details[i].penalty, 1e-8);
  }
}

TEST(ChangePoint, FailuresAreReported) {
  const int n = 40;
  const Eigen::VectorXd y = iid_series(per_time_params(truth_theta(design_at(n, 21)), design_at(n, 21)), 3);
  auto make = [&](int tau) { return design_at(n, tau); };
  // tau = n is not a valid change point; it is recorded as failed
  const ChangePointSelection s = select_changepoint(make, y, {20, n});
  EXPECT_TRUE(s.details[0].ok);
  EXPECT_FALSE(s.details[1].ok);
  EXPECT_FALSE(s.details[1].error.empty());
  EXPECT_TRUE(std::isinf(s.cbic_values[1]));
  EXPECT_EQ(s.selected_tau, 20);
  EXPECT_ANY_THROW(select_changepoint(make, y, {n, n + 1}));
  EXPECT_ANY_THROW(select_changepoint(make, y, {}));
}
