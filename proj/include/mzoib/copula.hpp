#pragma once

#include <string>
#include <string_view>

#include "mzoib/zoib.hpp"

namespace mzoib {

enum class CopulaKind { gaussian, clayton, gumbel, frank, amh };

CopulaKind parse_copula_kind(std::string_view name);
std::string to_string(CopulaKind kind);

// A one-parameter bivariate copula. Ranges: Gaussian and AMH rho in [-1, 1],
// Clayton rho >= -1, Gumbel rho >= 1, Frank any real. rho = 0 for Clayton and
// Frank is read as the independence limit.
struct CopulaFamily {
  CopulaKind kind = CopulaKind::gaussian;
  double rho = 0.0;

  void validate() const;
};

// Parameter value at which the family reduces to the product copula.
double independence_value(CopulaKind kind);

// Search interval used by pseudo-likelihood estimation of rho.
struct ParamInterval {
  double lo;
  double hi;
};
ParamInterval estimation_bounds(CopulaKind kind);

double copula_cdf(const CopulaFamily& fam, double u1, double u2);

// log d^2 C / du1 du2, u1 and u2 in (0, 1).
double copula_log_density(const CopulaFamily& fam, double u1, double u2);

// h(u1 | u2) = dC/du2 (u1, u2) = P(U1 <= u1 | U2 = u2), u2 in (0, 1).
double copula_h(const CopulaFamily& fam, double u1, double u2);

// u1 with copula_h(u1, u2) = p. Closed form for Gaussian, Clayton and Frank;
// safeguarded Newton iteration otherwise.
double copula_h_inv(const CopulaFamily& fam, double p, double u2);

// C-volume of (u1_lo, u1_hi] x (u2_lo, u2_hi]. Round-off below zero is
// clamped; anything under -1e-12 throws NumericalError.
double rectangle_prob(const CopulaFamily& fam, double u1_lo, double u1_hi,
                      double u2_lo, double u2_hi);

struct PairDensity {
  double log_value = 0.0;
  bool degenerate = false;  // joint mass was not positive; log_value is -inf
};

// Joint log density/mass of (Y_t, Y_{t-1}) built from the two ZOIB margins and
// the copula. Interior-interior uses the copula density, atom-atom the
// rectangle volume, mixed pairs an h-function difference times the interior
// margin. With include_margins == false the interior marginal density factors
// are left out, which gives the per-pair term of the copula pseudo-likelihood.
PairDensity pairwise_log_density(const CopulaFamily& fam, double y_t, double y_prev,
                                 const ZoibParams& params_t,
                                 const ZoibParams& params_prev,
                                 bool include_margins = true);

}  // namespace mzoib
