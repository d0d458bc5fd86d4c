#pragma once

#include <optional>

#include <Eigen/Dense>

#include "mzoib/copula.hpp"
#include "mzoib/model.hpp"
#include "mzoib/optim.hpp"

namespace mzoib {

// Checks y in [0, 1], no NaN, one value per design row and at least
// n_params + 2 observations.
void validate_series(const Eigen::VectorXd& y, const DesignSet& design);

// Independence log-likelihood sum_t log f(y_t; theta). Returns -inf when an
// interior observation sees an infeasible mu_t (or the dispersion overflows).
double composite_loglik(const Theta& theta, const DesignSet& design, const Eigen::VectorXd& y);
double composite_loglik(const Eigen::VectorXd& flat, const DesignSet& design,
                        const Eigen::VectorXd& y);

// Per-observation scores u_t(theta) as rows of an n x p matrix, columns in
// stacked order. Throws NumericalError at infeasible theta.
Eigen::MatrixXd score_contributions(const Eigen::VectorXd& flat, const DesignSet& design,
                                    const Eigen::VectorXd& y);
Eigen::VectorXd composite_score(const Eigen::VectorXd& flat, const DesignSet& design,
                                const Eigen::VectorXd& y);
Eigen::VectorXd composite_score(const Theta& theta, const DesignSet& design,
                                const Eigen::VectorXd& y);

// Default starting values (empirical logits, least squares on logit(y),
// moment dispersion), pulled toward a constant-mean start if infeasible.
Theta initial_theta(const DesignSet& design, const Eigen::VectorXd& y);

struct StageOneFit {
  Theta theta_hat;
  double loglik = 0.0;
  Eigen::VectorXd score_at_opt;
  bool converged = false;
  int iterations = 0;
};

StageOneFit fit_stage1(const DesignSet& design, const Eigen::VectorXd& y,
                       const std::optional<Theta>& init = std::nullopt,
                       const numkit::OptimOptions& options = {});

struct StageTwoOptions {
  // Keep the interior marginal density factors in every pair term (full
  // conditional likelihood). They do not depend on rho.
  bool include_margins = false;
  int grid_points = 21;
};

struct StageTwoFit {
  CopulaKind family = CopulaKind::gaussian;
  double rho_hat = 0.0;
  double pseudo_loglik = 0.0;
  bool flat = false;  // objective constant in rho; rho_hat is the independence value
};

// Copula pseudo-log-likelihood sum_{t>=2} log C~(u_t, u_{t-1}; rho) at fixed theta.
double stage2_objective(const CopulaFamily& fam, const PerTimeParams& params,
                        const Eigen::VectorXd& y, bool include_margins = false);

StageTwoFit fit_stage2_copula(CopulaKind kind, const Theta& theta_hat, const DesignSet& design,
                              const Eigen::VectorXd& y, const StageTwoOptions& options = {});

}  // namespace mzoib
