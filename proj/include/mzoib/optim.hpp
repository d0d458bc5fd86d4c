#pragma once

#include <functional>

#include <Eigen/Dense>

namespace mzoib::numkit {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct OptimOptions {
  double grad_tol = 1e-6;  // on the infinity norm of the gradient
  int max_iter = 500;
  bool simplex_restart = true;
  // Starting inverse Hessian of -f for BFGS; empty means a scaled identity.
  Eigen::MatrixXd inverse_hessian;
};

struct OptimResult {
  Eigen::VectorXd argmax;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
};

// Maximizes f starting from x0. With a gradient: BFGS with backtracking line
// search, then one Nelder-Mead restart from the incumbent (followed by a BFGS
// polish) if that fails to converge. Without a gradient: Nelder-Mead with
// restarts, convergence judged on a central-difference gradient.
//
// f may return -inf (or NaN) to mark an infeasible point. Such trial points
// are rejected by the line search and the gradient is never evaluated there.
// Throws NumericalError if f(x0) is not finite. Hitting the iteration cap
// yields converged == false rather than an exception.
OptimResult maximize(const Objective& f, const Gradient& grad,
                     const Eigen::VectorXd& x0,
                     const OptimOptions& options = {});

// Central-difference gradient, step h * max(1, |x_i|).
Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x,
                                 double h = 1e-6);

// Bounded 1-D maximization (Brent's golden-section / parabolic method).
struct ScalarOptimum {
  double argmax = 0.0;
  double value = 0.0;
  int evaluations = 0;
};
ScalarOptimum maximize_bounded(const std::function<double(double)>& f, double lo,
                               double hi, double tol = 1e-8, int max_iter = 200);

}  // namespace mzoib::numkit
