#pragma once

#include "mzoib/rng.hpp"

namespace mzoib {

// Zero-one-inflated Beta law: P(Y = 0) = 1 - p1, P(Y = 1) = p1 p2, and with
// probability p1 (1 - p2) a Beta draw with mean mu and dispersion phi.
struct ZoibParams {
  double p1 = 1.0;   // P(Y > 0)
  double p2 = 0.0;   // P(Y = 1 | Y > 0)
  double mu = 0.5;   // conditional Beta mean
  double phi = 1.0;  // Beta dispersion

  bool valid() const;
  // Throws DomainError naming the violated constraint.
  void validate() const;

  double mass_zero() const { return 1.0 - p1; }
  double mass_one() const { return p1 * p2; }
  double mass_continuous() const { return p1 * (1.0 - p2); }
};

// Right-continuous CDF value and its left limit.
struct CdfPair {
  double u = 0.0;
  double u_minus = 0.0;
};

// Log Beta density in the mean/dispersion parameterization, y in (0, 1).
double beta_log_pdf(double y, double mu, double phi);

// Log of the mixed density: atom masses at 0 and 1, weighted Beta density
// inside.
double zoib_log_pdf(double y, const ZoibParams& params);

CdfPair zoib_cdf(double y, const ZoibParams& params);

// Generalized inverse: 0 when u <= 1 - p1, 1 when u > 1 - p1 p2, the Beta
// quantile of the rescaled u in between.
double zoib_quantile(double u, const ZoibParams& params);

enum class VarianceForm {
  derived,     // law of total variance
  as_printed,  // grouping as commonly printed, kept for comparison only
};

struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;
};

MeanVar zoib_mean_var(const ZoibParams& params,
                      VarianceForm form = VarianceForm::derived);

// Conditional Beta mean giving marginal mean v. May return a value outside
// (0, 1); callers treat that as an infeasible parameter point. Throws
// DomainError when p1 == 0 or p2 == 1.
double mu_from_marginal(double v, double p1, double p2);

double zoib_sample(const ZoibParams& params, RngStream& rng);

}  // namespace mzoib
