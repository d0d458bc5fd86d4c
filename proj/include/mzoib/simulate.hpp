#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mzoib/copula.hpp"
#include "mzoib/infer.hpp"
#include "mzoib/model.hpp"
#include "mzoib/rng.hpp"

namespace mzoib {

// First-order Markov chain: u_1 uniform, u_t = h^{-1}(w_t | u_{t-1}),
// y_t = F_t^{-1}(u_t). Throws NumericalError listing infeasible times.
Eigen::VectorXd markov_series(const Theta& theta, const DesignSet& design,
                              const CopulaFamily& family, RngStream& rng);
Eigen::VectorXd markov_series(const PerTimeParams& params, const CopulaFamily& family,
                              RngStream& rng);

// Gaussian chain through the latent AR(1) z_t = rho z_{t-1} + sqrt(1 - rho^2) e_t.
Eigen::VectorXd latent_gaussian_series(const PerTimeParams& params, double rho, RngStream& rng);

struct McStudyConfig {
  int n = 120;
  int K = 500;
  Theta theta_true;
  CopulaFamily family;                        // generating copula
  CopulaKind fit_family = CopulaKind::gaussian;  // copula used for the bootstrap
  ItsConfig its;                              // its.n is overridden by n
  SeMethod se_method = SeMethod::bootstrap;
  int R = 200;
  HacConfig hac;
  bool select_tau = false;
  std::vector<int> candidates;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const;
};

struct CoefficientSummary {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;        // SE(beta-hat): empirical SD of the estimates
  double mean_se = 0.0;   // E(SE-hat)
  double coverage = 0.0;  // CI coverage of the truth
  double power = 0.0;     // rate of (beta-hat / SE-hat)^2 > chi2_1(1 - alpha)
};

struct McStudyReport {
  int n = 0;
  int K = 0;
  int converged = 0;
  int failed = 0;
  std::vector<CoefficientSummary> coefficients;
  double level_test_rate = 0.0;
  double trend_test_rate = 0.0;
  double joint_test_rate = 0.0;
  double tau_selected_rate = 0.0;  // share of replicates selecting its.tau (select_tau only)
  double mean_rho_hat = 0.0;       // bootstrap only
  double wall_seconds = 0.0;
};

McStudyReport run_mc_study(const McStudyConfig& cfg);

}  // namespace mzoib
