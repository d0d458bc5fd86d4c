#pragma once

// Special functions shared by the distribution, copula and inference code.
// All functions are pure and thread-safe.

namespace mzoib::numkit {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 6.28318530717958647692;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kLnSqrt2Pi = 0.91893853320467274178;

// ln Gamma(a), a > 0. Lanczos approximation with reflection below 0.5.
double log_gamma(double a);

// psi(a) = d/da ln Gamma(a), a > 0. Recurrence up to 10, then the
// asymptotic Bernoulli series.
double digamma(double a);

// ln B(a, b).
double log_beta(double a, double b);

double normal_cdf(double x);
double normal_pdf(double x);

// Inverse of normal_cdf on (0, 1). Acklam's rational start refined by
// Halley steps against erfc.
double normal_quantile(double p);

// P(X <= x, Y <= y) for a standard bivariate normal with correlation rho.
// Genz's Gauss-Legendre reduction of the single-integral representation;
// accurate to about 1e-15.
double bivariate_normal_cdf(double x, double y, double rho);

// Regularized incomplete beta I_x(a, b).
double reg_inc_beta(double x, double a, double b);

// x in [0, 1] with I_x(a, b) = p.
double reg_inc_beta_inv(double p, double a, double b);

// Regularized lower / upper incomplete gamma P(a, x), Q(a, x).
double reg_gamma_p(double a, double x);
double reg_gamma_q(double a, double x);

double chi_square_cdf(double x, double df);
// Upper tail 1 - cdf, computed without cancellation.
double chi_square_sf(double x, double df);
double chi_square_quantile(double p, double df);

// Numerically stable helpers for the logistic links.
double logistic(double eta);
double logit(double p);
// log(1 + exp(eta))
double softplus(double eta);

}  // namespace mzoib::numkit
