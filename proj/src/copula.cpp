#include "mzoib/copula.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mzoib/errors.hpp"
#include "mzoib/numkit.hpp"

namespace mzoib {

namespace {

using numkit::normal_cdf;
using numkit::normal_quantile;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kGaussIndep = 1e-10;
constexpr double kFrankIndep = 1e-6;

bool is_independent(const CopulaFamily& fam) {
  switch (fam.kind) {
    case CopulaKind::gaussian:
      return std::abs(fam.rho) < kGaussIndep;
    case CopulaKind::clayton:
    case CopulaKind::amh:
      return fam.rho == 0.0;
    case CopulaKind::gumbel:
      return fam.rho == 1.0;
    case CopulaKind::frank:
      return false;  // handled by the small-rho expansion
  }
  return false;
}

bool frank_small(const CopulaFamily& fam) {
  return fam.kind == CopulaKind::frank && std::abs(fam.rho) < kFrankIndep;
}

void require_open_unit(const char* fn, double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw DomainError(std::string(fn) + ": argument must lie in (0, 1)");
  }
}

void require_closed_unit(const char* fn, double u) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw DomainError(std::string(fn) + ": argument must lie in [0, 1]");
  }
}

// Families whose density and h-function need a stricter range than the CDF.
void require_smooth_range(const char* fn, const CopulaFamily& fam) {
  fam.validate();
  if (fam.kind == CopulaKind::gaussian && std::abs(fam.rho) >= 1.0) {
    throw DomainError(std::string(fn) + ": Gaussian rho must satisfy |rho| < 1");
  }
  if (fam.kind == CopulaKind::clayton && fam.rho < 0.0) {
    throw DomainError(std::string(fn) + ": Clayton is supported for rho >= 0 only");
  }
}

// log(u1^-rho + u2^-rho - 1) for Clayton with rho > 0, without overflow.
double clayton_log_s(double rho, double u1, double u2) {
  const double a = -rho * std::log(u1);
  const double b = -rho * std::log(u2);
  const double m = std::max(a, b);
  if (m < 1.0) return std::log1p(std::expm1(a) + std::expm1(b));
  return m + std::log(std::exp(a - m) + std::exp(b - m) - std::exp(-m));
}

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

struct GumbelTerms {
  double x, y, a;  // -log u1, -log u2, (x^rho + y^rho)^(1/rho)
  double a_minus_y;
};

GumbelTerms gumbel_terms(double rho, double u1, double u2) {
  const double x = -std::log(u1);
  const double y = -std::log(u2);
  const double hi = std::max(x, y);
  const double lo = std::min(x, y);
  if (hi == 0.0) return {x, y, 0.0, 0.0};
  const double grow = std::expm1(std::log1p(std::pow(lo / hi, rho)) / rho);
  const double a = hi + hi * grow;
  return {x, y, a, y == hi ? y * grow : a - y};
}

// expm1(-rho) + expm1(-rho u1) expm1(-rho u2), written as two terms of equal
// sign so large |rho| does not cancel.
double frank_den(double rho, double u1, double u2) {
  return std::exp(-rho * u1) * std::expm1(-rho * (1.0 - u1)) +
         std::exp(-rho * u2) * std::expm1(-rho * u1);
}

// Solves copula_h(u1, u2) = p for u1 by bracketed Newton steps.
double h_inv_numeric(const CopulaFamily& fam, double p, double u2) {
  double lo = 0.0;
  double hi = 1.0;
  double x = p;
  for (int it = 0; it < 200; ++it) {
    const double g = copula_h(fam, x, u2) - p;
    if (std::abs(g) <= 1e-15) return x;
    if (g < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    if (hi - lo <= 1e-16) return x;
    const double dens = std::exp(copula_log_density(fam, x, u2));
    double next = x - g / dens;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

}  // namespace

CopulaKind parse_copula_kind(std::string_view name) {
  if (name == "gaussian") return CopulaKind::gaussian;
  if (name == "clayton") return CopulaKind::clayton;
  if (name == "gumbel") return CopulaKind::gumbel;
  if (name == "frank") return CopulaKind::frank;
  if (name == "amh") return CopulaKind::amh;
  throw ConfigError("unknown copula family '" + std::string(name) +
                    "' (expected gaussian, clayton, gumbel, frank or amh)");
}

std::string to_string(CopulaKind kind) {
  switch (kind) {
    case CopulaKind::gaussian:
      return "gaussian";
    case CopulaKind::clayton:
      return "clayton";
    case CopulaKind::gumbel:
      return "gumbel";
    case CopulaKind::frank:
      return "frank";
    case CopulaKind::amh:
      return "amh";
  }
  return "unknown";
}

void CopulaFamily::validate() const {
  bool ok = std::isfinite(rho);
  switch (kind) {
    case CopulaKind::gaussian:
    case CopulaKind::amh:
      ok = ok && rho >= -1.0 && rho <= 1.0;
      break;
    case CopulaKind::clayton:
      ok = ok && rho >= -1.0;
      break;
    case CopulaKind::gumbel:
      ok = ok && rho >= 1.0;
      break;
    case CopulaKind::frank:
      break;
  }
  if (!ok) {
    std::ostringstream os;
    os << to_string(kind) << " copula parameter " << rho << " is out of range";
    throw DomainError(os.str());
  }
}

double independence_value(CopulaKind kind) {
  return kind == CopulaKind::gumbel ? 1.0 : 0.0;
}

ParamInterval estimation_bounds(CopulaKind kind) {
  switch (kind) {
    case CopulaKind::gaussian:
    case CopulaKind::amh:
      return {-0.999, 0.999};
    case CopulaKind::frank:
      return {-50.0, 50.0};
    case CopulaKind::gumbel:
      return {1.0, 50.0};
    case CopulaKind::clayton:
      return {1e-4, 50.0};
  }
  return {0.0, 0.0};
}

double copula_cdf(const CopulaFamily& fam, double u1, double u2) {
  fam.validate();
  require_closed_unit("copula_cdf", u1);
  require_closed_unit("copula_cdf", u2);
  if (u1 == 0.0 || u2 == 0.0) return 0.0;
  if (u1 == 1.0) return u2;
  if (u2 == 1.0) return u1;
  if (is_independent(fam)) return u1 * u2;
  const double rho = fam.rho;
  double c = 0.0;
  switch (fam.kind) {
    case CopulaKind::gaussian:
      c = numkit::bivariate_normal_cdf(normal_quantile(u1), normal_quantile(u2), rho);
      break;
    case CopulaKind::clayton:
      if (rho > 0.0) {
        c = std::exp(-clayton_log_s(rho, u1, u2) / rho);
      } else {
        const double s = std::pow(u1, -rho) + std::pow(u2, -rho) - 1.0;
        c = s > 0.0 ? std::pow(s, -1.0 / rho) : 0.0;
      }
      break;
    case CopulaKind::gumbel:
      c = std::exp(-gumbel_terms(rho, u1, u2).a);
      break;
    case CopulaKind::frank:
      if (frank_small(fam)) {
        c = u1 * u2 * (1.0 + 0.5 * rho * (1.0 - u1) * (1.0 - u2));
      } else {
        c = -std::log1p(std::expm1(-rho * u1) * std::expm1(-rho * u2) / std::expm1(-rho)) /
            rho;
      }
      break;
    case CopulaKind::amh:
      c = u1 * u2 / (1.0 - rho * (1.0 - u1) * (1.0 - u2));
      break;
  }
  return std::clamp(c, std::max(u1 + u2 - 1.0, 0.0), std::min(u1, u2));
}

double copula_log_density(const CopulaFamily& fam, double u1, double u2) {
  require_smooth_range("copula_log_density", fam);
  require_open_unit("copula_log_density", u1);
  require_open_unit("copula_log_density", u2);
  if (is_independent(fam)) return 0.0;
  const double rho = fam.rho;
  switch (fam.kind) {
    case CopulaKind::gaussian: {
      const double x = normal_quantile(u1);
      const double y = normal_quantile(u2);
      const double one_m = 1.0 - rho * rho;
      return -0.5 * std::log(one_m) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * one_m);
    }
    case CopulaKind::clayton:
      return std::log1p(rho) - (rho + 1.0) * (std::log(u1) + std::log(u2)) -
             (1.0 / rho + 2.0) * clayton_log_s(rho, u1, u2);
    case CopulaKind::gumbel: {
      const auto g = gumbel_terms(rho, u1, u2);
      return -g.a - std::log(u1) - std::log(u2) + (rho - 1.0) * (std::log(g.x) + std::log(g.y)) +
             (1.0 - 2.0 * rho) * std::log(g.a) + std::log(g.a + rho - 1.0);
    }
    case CopulaKind::frank:
      if (frank_small(fam)) {
        return std::log1p(0.5 * rho * (1.0 - 2.0 * u1) * (1.0 - 2.0 * u2));
      }
      return std::log(-rho * std::expm1(-rho)) - rho * (u1 + u2) -
             2.0 * std::log(std::abs(frank_den(rho, u1, u2)));
    case CopulaKind::amh: {
      const double d = 1.0 - rho * (1.0 - u1) * (1.0 - u2);
      const double num =
          1.0 + rho * ((1.0 + u1) * (1.0 + u2) - 3.0) + rho * rho * (1.0 - u1) * (1.0 - u2);
      return std::log(num) - 3.0 * std::log(d);
    }
  }
  return kNegInf;
}

double copula_h(const CopulaFamily& fam, double u1, double u2) {
  require_smooth_range("copula_h", fam);
  require_closed_unit("copula_h", u1);
  require_open_unit("copula_h", u2);
  if (u1 == 0.0) return 0.0;
  if (u1 == 1.0) return 1.0;
  if (is_independent(fam)) return u1;
  const double rho = fam.rho;
  double h = 0.0;
  switch (fam.kind) {
    case CopulaKind::gaussian:
      h = normal_cdf((normal_quantile(u1) - rho * normal_quantile(u2)) / std::sqrt(1.0 - rho * rho));
      break;
    case CopulaKind::clayton:
    {
      // h = (1 + u2^rho (u1^-rho - 1))^(-1 - 1/rho)
      const double x = -rho * std::log(u1);
      const double log_em1 = x > 1.0 ? x + std::log(-std::expm1(-x)) : std::log(std::expm1(x));
      h = std::exp(-(1.0 + 1.0 / rho) * numkit::softplus(rho * std::log(u2) + log_em1));
    }
      break;
    case CopulaKind::gumbel: {
      const auto g = gumbel_terms(rho, u1, u2);
      h = std::exp(-g.a_minus_y + (1.0 - rho) * std::log1p(g.a_minus_y / g.y));
      break;
    }
    case CopulaKind::frank:
      if (frank_small(fam)) {
        h = u1 * (1.0 + 0.5 * rho * (1.0 - u1) * (1.0 - 2.0 * u2));
      } else {
        h = std::exp(-rho * u2) * std::expm1(-rho * u1) / frank_den(rho, u1, u2);
      }
      break;
    case CopulaKind::amh: {
      const double d = 1.0 - rho * (1.0 - u1) * (1.0 - u2);
      h = u1 * (1.0 - rho * (1.0 - u1)) / (d * d);
      break;
    }
  }
  return std::clamp(h, 0.0, 1.0);
}

double copula_h_inv(const CopulaFamily& fam, double p, double u2) {
  require_smooth_range("copula_h_inv", fam);
  require_closed_unit("copula_h_inv", p);
  require_open_unit("copula_h_inv", u2);
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  if (is_independent(fam)) return p;
  const double rho = fam.rho;
  double u1 = 0.0;
  switch (fam.kind) {
    case CopulaKind::gaussian:
      u1 = normal_cdf(rho * normal_quantile(u2) + std::sqrt(1.0 - rho * rho) * normal_quantile(p));
      break;
    case CopulaKind::clayton: {
      // s = 1 + u2^-rho (p^(-rho/(1+rho)) - 1), u1 = s^(-1/rho)
      const double b = -rho * std::log(u2);
      const double k = std::expm1(-(rho / (1.0 + rho)) * std::log(p));
      const double log_s = numkit::softplus(b + std::log(k));
      u1 = std::exp(-log_s / rho);
      break;
    }
    case CopulaKind::frank:
      if (frank_small(fam)) {
        u1 = p - 0.5 * rho * p * (1.0 - p) * (1.0 - 2.0 * u2);
      } else {
        // e^{-rho u1} = (p e^{-rho} + (1-p) e^{-rho u2}) / (p + (1-p) e^{-rho u2})
        const double lp = std::log(p), lq = std::log1p(-p);
        u1 = (log_sum_exp(lp, lq - rho * u2) - log_sum_exp(lp - rho, lq - rho * u2)) / rho;
      }
      break;
    case CopulaKind::gumbel:
    case CopulaKind::amh:
      u1 = h_inv_numeric(fam, p, u2);
      break;
  }
  return std::clamp(u1, 0.0, 1.0);
}

double rectangle_prob(const CopulaFamily& fam, double u1_lo, double u1_hi, double u2_lo,
                      double u2_hi) {
  if (!(u1_lo <= u1_hi) || !(u2_lo <= u2_hi)) {
    throw DomainError("rectangle_prob: lower corner exceeds upper corner");
  }
  const double v = copula_cdf(fam, u1_hi, u2_hi) - copula_cdf(fam, u1_lo, u2_hi) -
                   copula_cdf(fam, u1_hi, u2_lo) + copula_cdf(fam, u1_lo, u2_lo);
  if (v < -1e-12) {
    std::ostringstream os;
    os << "rectangle_prob: negative C-volume " << v << " for " << to_string(fam.kind)
       << " rho=" << fam.rho;
    throw NumericalError(os.str());
  }
  return std::max(v, 0.0);
}

PairDensity pairwise_log_density(const CopulaFamily& fam, double y_t, double y_prev,
                                 const ZoibParams& params_t, const ZoibParams& params_prev,
                                 bool include_margins) {
  const bool atom_t = y_t == 0.0 || y_t == 1.0;
  const bool atom_prev = y_prev == 0.0 || y_prev == 1.0;
  const CdfPair ct = zoib_cdf(y_t, params_t);
  const CdfPair cp = zoib_cdf(y_prev, params_prev);

  auto from_mass = [](double mass, double margins) {
    if (!(mass > 0.0)) return PairDensity{kNegInf, true};
    return PairDensity{std::log(mass) + margins, false};
  };

  if (!atom_t && !atom_prev) {
    double margins = 0.0;
    if (include_margins) margins = zoib_log_pdf(y_t, params_t) + zoib_log_pdf(y_prev, params_prev);
    const double lc = copula_log_density(fam, ct.u, cp.u);
    if (!std::isfinite(lc)) return {kNegInf, true};
    return {lc + margins, false};
  }
  if (atom_t && atom_prev) {
    return from_mass(rectangle_prob(fam, ct.u_minus, ct.u, cp.u_minus, cp.u), 0.0);
  }
  if (atom_t) {
    const double mass = copula_h(fam, ct.u, cp.u) - copula_h(fam, ct.u_minus, cp.u);
    return from_mass(mass, include_margins ? zoib_log_pdf(y_prev, params_prev) : 0.0);
  }
  // Interior y_t, atom y_prev: d/du_t of C, rewritten with exchangeability.
  const double mass = copula_h(fam, cp.u, ct.u) - copula_h(fam, cp.u_minus, ct.u);
  return from_mass(mass, include_margins ? zoib_log_pdf(y_t, params_t) : 0.0);
}

}  // namespace mzoib
