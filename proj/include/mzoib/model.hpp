#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mzoib/zoib.hpp"

namespace mzoib {

enum class TimeTransform { identity, log };

TimeTransform parse_transform(std::string_view name);
std::string to_string(TimeTransform transform);

// Segmented regression setup for an interrupted time series.
struct ItsConfig {
  int n = 0;         // series length
  int tau = 0;       // change-point time (same units as the time column)
  double t0 = 0.0;   // policy intervention time, informational
  TimeTransform transform = TimeTransform::identity;
  bool dispersion_change = true;  // X4 = [1, I(T(t) >= T(tau))], else intercept only

  void validate() const;
};

// Design matrices of the four sub-models; rows are time points and the first
// column of each is the intercept.
struct DesignSet {
  Eigen::MatrixXd x1;  // P(Y > 0), logit link
  Eigen::MatrixXd x2;  // P(Y = 1 | Y > 0), logit link
  Eigen::MatrixXd x3;  // marginal mean, logit link
  Eigen::MatrixXd x4;  // dispersion, log link
  std::array<std::vector<std::string>, 4> column_names;

  Eigen::Index rows() const { return x1.rows(); }
  Eigen::Index n_params() const { return x1.cols() + x2.cols() + x3.cols() + x4.cols(); }
  void validate() const;
  const Eigen::MatrixXd& block(int b) const;
};

// Coefficients of the four linear predictors.
struct Theta {
  Eigen::VectorXd beta1;
  Eigen::VectorXd beta2;
  Eigen::VectorXd beta3;
  Eigen::VectorXd beta4;

  Eigen::Index size() const { return beta1.size() + beta2.size() + beta3.size() + beta4.size(); }
  // Stacked as (beta1, beta2, beta3, beta4).
  Eigen::VectorXd flatten() const;
  static Theta unflatten(const Eigen::VectorXd& flat, const DesignSet& design);
  static Theta zeros(const DesignSet& design);
};

// Offset of block b (0-based: beta1 .. beta4) inside the stacked vector.
Eigen::Index block_offset(const DesignSet& design, int block);

// "beta3_2" style names, one per stacked coefficient.
std::vector<std::string> parameter_names(const DesignSet& design);

// T(t) for the chosen transform.
double transform_time(double t, TimeTransform transform);

// Design for times 1..n.
DesignSet its_design(const ItsConfig& cfg);
// Design for explicit times (strictly increasing, positive); extra_x3 columns
// (may be empty) are appended to the marginal-mean design.
DesignSet its_design(const ItsConfig& cfg, std::span<const double> times,
                     const Eigen::MatrixXd& extra_x3 = {},
                     const std::vector<std::string>& extra_names = {});

struct LinearPredictors {
  double eta1 = 0.0;
  double eta2 = 0.0;
  double eta3 = 0.0;
  double eta4 = 0.0;
};

LinearPredictors linear_predictors(const Theta& theta, const DesignSet& design,
                                   Eigen::Index t);

// mu_t from the three logit predictors; can fall outside (0, 1).
double conditional_mean(const LinearPredictors& eta);

struct PerTimeParams {
  std::vector<ZoibParams> params;
  std::vector<double> marginal_mean;  // v_t
  std::vector<char> feasible;         // mu_t in (0, 1)

  bool all_feasible() const;
  std::vector<Eigen::Index> infeasible_indices() const;
};

PerTimeParams per_time_params(const Theta& theta, const DesignSet& design);

// Throws ShapeError when theta's block lengths disagree with the design.
void check_shapes(const Theta& theta, const DesignSet& design);

}  // namespace mzoib
