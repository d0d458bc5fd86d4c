#include "mzoib/zoib.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mzoib/errors.hpp"
#include "mzoib/numkit.hpp"

namespace mzoib {

namespace {

constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;

}  // namespace

bool ZoibParams::valid() const {
  return p1 >= 0.0 && p1 <= 1.0 && p2 >= 0.0 && p2 <= 1.0 && mu > 0.0 && mu < 1.0 &&
         phi > 0.0 && std::isfinite(phi);
}

void ZoibParams::validate() const {
  if (valid()) return;
  std::ostringstream os;
  os << "invalid ZOIB parameters (p1=" << p1 << ", p2=" << p2 << ", mu=" << mu
     << ", phi=" << phi << ")";
  throw DomainError(os.str());
}

double beta_log_pdf(double y, double mu, double phi) {
  if (!(y > 0.0 && y < 1.0)) throw DomainError("beta_log_pdf: y must lie in (0, 1)");
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  return numkit::log_gamma(phi) - numkit::log_gamma(a) - numkit::log_gamma(b) +
         (a - 1.0) * std::log(y) + (b - 1.0) * std::log1p(-y);
}

double zoib_log_pdf(double y, const ZoibParams& params) {
  params.validate();
  if (!(y >= 0.0 && y <= 1.0)) throw DomainError("zoib_log_pdf: y must lie in [0, 1]");
  if (y == 0.0) return std::log(params.mass_zero());
  if (y == 1.0) return std::log(params.mass_one());
  return std::log(params.p1) + std::log1p(-params.p2) +
         beta_log_pdf(y, params.mu, params.phi);
}

CdfPair zoib_cdf(double y, const ZoibParams& params) {
  params.validate();
  if (!(y >= 0.0 && y <= 1.0)) throw DomainError("zoib_cdf: y must lie in [0, 1]");
  if (y == 0.0) return {params.mass_zero(), 0.0};
  if (y == 1.0) return {1.0, 1.0 - params.mass_one()};
  const double u =
      params.mass_zero() +
      params.mass_continuous() * numkit::reg_inc_beta(y, params.mu * params.phi,
                                                      (1.0 - params.mu) * params.phi);
  return {u, u};
}

double zoib_quantile(double u, const ZoibParams& params) {
  params.validate();
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("zoib_quantile: u must lie in [0, 1]");
  if (u <= params.mass_zero()) return 0.0;
  if (u > 1.0 - params.mass_one() || u == 1.0) return 1.0;
  const double q = std::min((u - params.mass_zero()) / params.mass_continuous(), 1.0);
  const double y = numkit::reg_inc_beta_inv(q, params.mu * params.phi,
                                            (1.0 - params.mu) * params.phi);
  // Keep continuous draws off the atoms.
  return std::clamp(y, std::numeric_limits<double>::min(), kBelowOne);
}

MeanVar zoib_mean_var(const ZoibParams& params, VarianceForm form) {
  params.validate();
  const double p1 = params.p1;
  const double p2 = params.p2;
  const double mu = params.mu;
  const double s = p1 * (1.0 - p2);
  const double a = p1 * p2;
  const double beta_var = mu * (1.0 - mu) / (1.0 + params.phi);
  MeanVar out;
  out.mean = p1 * ((1.0 - p2) * mu + p2);
  const double cross = 2.0 * p1 * p2 * mu;
  const double inner = beta_var + (1.0 - s) * mu * mu +
                       (form == VarianceForm::as_printed ? cross : -cross);
  out.variance = s * inner + a * (1.0 - a);
  return out;
}

double mu_from_marginal(double v, double p1, double p2) {
  if (p1 == 0.0 || p2 == 1.0) {
    throw DomainError("mu_from_marginal: degenerate distribution (p1 = 0 or p2 = 1)");
  }
  return (v / p1 - p2) / (1.0 - p2);
}

double zoib_sample(const ZoibParams& params, RngStream& rng) {
  return zoib_quantile(rng.uniform_clipped(), params);
}

}  // namespace mzoib
