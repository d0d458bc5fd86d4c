#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mzoib/estimate.hpp"

namespace mzoib {

struct HacConfig {
  std::optional<int> max_lag;  // empty: floor(4 (n/100)^(2/9))

  int resolve(Eigen::Index n) const;
};

// Bartlett weights w_0 .. w_{L+1}.
std::vector<double> bartlett_weights(int max_lag);

enum class SeMethod { hac, bootstrap };
SeMethod parse_se_method(std::string_view name);
std::string to_string(SeMethod method);

struct CovarianceEstimate {
  Eigen::MatrixXd h_hat;  // per-observation sensitivity (empty for bootstrap)
  Eigen::MatrixXd j_hat;  // per-observation variability (empty for bootstrap)
  Eigen::MatrixXd cov;    // covariance of the estimator
  SeMethod method = SeMethod::hac;
  int max_lag = -1;
  int replicates_used = 0;
  int replicates_failed = 0;
  std::vector<std::string> warnings;

  Eigen::VectorXd std_errors() const;
};

// -(1/n) times the Jacobian of the score, by central differences of the
// analytic score (one-sided where a neighbour is infeasible); symmetrized.
Eigen::MatrixXd sensitivity_matrix(const Eigen::VectorXd& flat, const DesignSet& design,
                                   const Eigen::VectorXd& y);

// (1/n) [Gamma_0 + sum_l w_l (Gamma_l + Gamma_l')] from per-observation scores.
Eigen::MatrixXd variability_matrix(const Eigen::MatrixXd& scores, int max_lag);

CovarianceEstimate hac_covariance(const StageOneFit& fit, const DesignSet& design,
                                  const Eigen::VectorXd& y, const HacConfig& cfg = {});

struct BootstrapConfig {
  int replicates = 500;
  std::uint64_t seed = 0;
  std::uint64_t replicate_index = 0;  // outer Monte Carlo replicate owning the streams
  int workers = 1;
};

// Parametric bootstrap: R series from the fitted chain, stage-1 refits from
// theta_hat, sample SD / covariance over converged refits.
CovarianceEstimate bootstrap_se(const StageOneFit& fit1, const StageTwoFit& fit2,
                                const DesignSet& design, const BootstrapConfig& cfg);

struct WaldTest {
  Eigen::MatrixXd a;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  double alpha = 0.05;
  bool reject = false;
};

// W = (A theta)' (A V A')^{-1} (A theta) against chi-square(rank A).
WaldTest wald_test(const Eigen::VectorXd& theta_hat, const Eigen::MatrixXd& cov,
                   const Eigen::MatrixXd& a, double alpha = 0.05);

enum class ItsHypothesis { level, trend, level_and_trend };
std::string to_string(ItsHypothesis h);
// Constraint rows picking the level-change and/or trend-change coefficients of
// the marginal-mean block.
Eigen::MatrixXd its_constraint(const DesignSet& design, ItsHypothesis h);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

// estimate +/- z_{alpha/2} se.
std::vector<Interval> confidence_intervals(const Eigen::VectorXd& estimate,
                                           const Eigen::VectorXd& se, double alpha = 0.05);

struct CbicOptions {
  bool doubled_loglik = false;  // -2 l + log(n) tr(J^{-1} H)
  numkit::OptimOptions optim;
};

struct CandidateResult {
  int tau = 0;
  bool ok = false;
  double loglik = 0.0;
  double penalty = 0.0;  // tr(J^{-1} H)
  double cbic = 0.0;
  std::string error;
};

struct ChangePointSelection {
  std::vector<int> candidates;
  std::vector<double> cbic_values;  // +inf for failed candidates
  std::vector<CandidateResult> details;
  int selected_tau = 0;
};

// Fits every candidate design and returns the cBIC minimizer (smallest tau on
// ties).
ChangePointSelection select_changepoint(const std::function<DesignSet(int)>& make_design,
                                        const Eigen::VectorXd& y, const std::vector<int>& candidates,
                                        const HacConfig& hac = {}, const CbicOptions& options = {},
                                        int workers = 1);

}  // namespace mzoib
