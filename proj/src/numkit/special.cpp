#include "mzoib/numkit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "mzoib/errors.hpp"

namespace mzoib::numkit {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = 1e-300;

[[noreturn]] void domain_fail(const char* fn, const std::string& what) {
  throw DomainError(std::string(fn) + ": " + what);
}

// Lanczos g = 7, n = 9.
constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczos = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

double lanczos_log_gamma(double x) {
  if (x < 0.5) {
    // reflection: Gamma(x) Gamma(1 - x) = pi / sin(pi x)
    return std::log(kPi / std::sin(kPi * x)) - lanczos_log_gamma(1.0 - x);
  }
  x -= 1.0;
  double a = kLanczos[0];
  for (int i = 1; i < 9; ++i) a += kLanczos[i] / (x + i);
  const double t = x + kLanczosG + 0.5;
  return kLnSqrt2Pi + (x + 0.5) * std::log(t) - t + std::log(a);
}

// 20-point Gauss-Legendre rule on [-1, 1], built once by Newton iteration on
// P_20.
struct GaussLegendre20 {
  std::array<double, 20> x{};
  std::array<double, 20> w{};

  GaussLegendre20() {
    constexpr int n = 20;
    for (int i = 0; i < n / 2; ++i) {
      double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 1; j <= n; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      const double wi = 2.0 / ((1.0 - z * z) * dp * dp);
      x[i] = -z;
      x[n - 1 - i] = z;
      w[i] = wi;
      w[n - 1 - i] = wi;
    }
  }
};

const GaussLegendre20& gl20() {
  static const GaussLegendre20 rule;
  return rule;
}

// P(X > h, Y > k) for correlation r (Genz 2004, BVND).
double bvn_upper(double h, double k, double r) {
  const auto& gl = gl20();
  double hk = h * k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (int i = 0; i < 20; ++i) {
      const double sn = std::sin(asr * (gl.x[i] + 1.0) / 2.0);
      bvn += gl.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
    }
    return bvn * asr / (2.0 * kTwoPi) + normal_cdf(-h) * normal_cdf(-k);
  }
  if (r < 0.0) {
    k = -k;
    hk = -hk;
  }
  if (std::abs(r) < 1.0) {
    const double as = (1.0 - r) * (1.0 + r);
    double a = std::sqrt(as);
    const double bs = (h - k) * (h - k);
    const double c = (4.0 - hk) / 8.0;
    const double d = (12.0 - hk) / 16.0;
    double asr = -(bs / as + hk) / 2.0;
    if (asr > -100.0) {
      bvn = a * std::exp(asr) *
            (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 +
             c * d * as * as / 5.0);
    }
    if (hk > -100.0) {
      const double b = std::sqrt(bs);
      bvn -= std::exp(-hk / 2.0) * std::sqrt(kTwoPi) * normal_cdf(-b / a) * b *
             (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (int i = 0; i < 20; ++i) {
      const double xs = std::pow(a * (gl.x[i] + 1.0), 2);
      const double rs = std::sqrt(1.0 - xs);
      asr = -(bs / xs + hk) / 2.0;
      if (asr > -100.0) {
        bvn += a * gl.w[i] * std::exp(asr) *
               (std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs -
                (1.0 + c * xs * (1.0 + d * xs)));
      }
    }
    bvn = -bvn / kTwoPi;
  }
  if (r > 0.0) return bvn + normal_cdf(-std::max(h, k));
  bvn = -bvn;
  if (k > h) {
    if (h < 0.0) {
      bvn += normal_cdf(k) - normal_cdf(h);
    } else {
      bvn += normal_cdf(-h) - normal_cdf(-k);
    }
  }
  return bvn;
}

double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIter = 20000;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("reg_inc_beta: continued fraction did not converge");
}

double gamma_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 100000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kEps) {
      return sum * std::exp(-x + a * std::log(x) - log_gamma(a));
    }
  }
  throw NumericalError("reg_gamma_p: series did not converge");
}

double gamma_continued_fraction(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) {
      return std::exp(-x + a * std::log(x) - log_gamma(a)) * h;
    }
  }
  throw NumericalError("reg_gamma_q: continued fraction did not converge");
}

double normal_quantile_lower(double p) {
  // p in (0, 0.5]
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  for (int i = 0; i < 3; ++i) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(kTwoPi) * std::exp(x * x / 2.0);
    const double step = u / (1.0 + x * u / 2.0);
    x -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
  }
  return x;
}

}  // namespace

double log_gamma(double a) {
  if (!(a > 0.0) || !std::isfinite(a)) {
    domain_fail("log_gamma", "argument must be positive and finite");
  }
  return lanczos_log_gamma(a);
}

double digamma(double a) {
  if (!(a > 0.0) || !std::isfinite(a)) {
    domain_fail("digamma", "argument must be positive and finite");
  }
  double result = 0.0;
  while (a < 10.0) {
    result -= 1.0 / a;
    a += 1.0;
  }
  const double f = 1.0 / (a * a);
  const double tail =
      f * (1.0 / 12 -
           f * (1.0 / 120 -
                f * (1.0 / 252 -
                     f * (1.0 / 240 -
                          f * (1.0 / 132 - f * (691.0 / 32760 - f / 12))))));
  return result + std::log(a) - 0.5 / a - tail;
}

double log_beta(double a, double b) {
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x - kLnSqrt2Pi); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) domain_fail("normal_quantile", "p must lie in (0, 1)");
  if (p <= 0.5) return normal_quantile_lower(p);
  return -normal_quantile_lower(1.0 - p);
}

double bivariate_normal_cdf(double x, double y, double rho) {
  if (!(std::abs(rho) <= 1.0)) {
    domain_fail("bivariate_normal_cdf", "|rho| must not exceed 1");
  }
  if (std::isnan(x) || std::isnan(y)) {
    domain_fail("bivariate_normal_cdf", "NaN argument");
  }
  if (x == -INFINITY || y == -INFINITY) return 0.0;
  if (x == INFINITY) return normal_cdf(y);
  if (y == INFINITY) return normal_cdf(x);
  const double px = normal_cdf(x), py = normal_cdf(y);
  const double p = bvn_upper(-x, -y, rho);
  return std::clamp(p, std::max(0.0, px + py - 1.0), std::min(px, py));
}

double reg_inc_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) domain_fail("reg_inc_beta", "a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) domain_fail("reg_inc_beta", "x must lie in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * beta_continued_fraction(x, a, b) / a;
  }
  return 1.0 - std::exp(log_front) * beta_continued_fraction(1.0 - x, b, a) / b;
}

double reg_inc_beta_inv(double p, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) domain_fail("reg_inc_beta_inv", "a and b must be positive");
  if (!(p >= 0.0 && p <= 1.0)) domain_fail("reg_inc_beta_inv", "p must lie in [0, 1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;

  // Starting value (Numerical Recipes, invbetai).
  double x;
  if (a >= 1.0 && b >= 1.0) {
    const double pp = p < 0.5 ? p : 1.0 - p;
    const double t = std::sqrt(-2.0 * std::log(pp));
    double z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
    if (p < 0.5) z = -z;
    const double al = (z * z - 3.0) / 6.0;
    const double h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0));
    const double w = z * std::sqrt(al + h) / h -
                     (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0)) *
                         (al + 5.0 / 6.0 - 2.0 / (3.0 * h));
    x = a / (a + b * std::exp(2.0 * w));
  } else {
    const double lna = std::log(a / (a + b));
    const double lnb = std::log(b / (a + b));
    const double t = std::exp(a * lna) / a;
    const double u = std::exp(b * lnb) / b;
    const double w = t + u;
    if (p < t / w) {
      x = std::pow(a * w * p, 1.0 / a);
    } else {
      x = 1.0 - std::pow(b * w * (1.0 - p), 1.0 / b);
    }
  }
  if (!(x > 0.0 && x < 1.0)) x = 0.5;

  const double lbeta = log_beta(a, b);
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 300; ++it) {
    const double f = reg_inc_beta(x, a, b) - p;
    if (f == 0.0) return x;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double log_dens =
        (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lbeta;
    double next = x - f / std::exp(log_dens);
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 4.0 * kEps * x || hi - lo <= 4.0 * kEps * hi) {
      return next;
    }
    x = next;
  }
  return x;
}

double reg_gamma_p(double a, double x) {
  if (!(a > 0.0)) domain_fail("reg_gamma_p", "a must be positive");
  if (!(x >= 0.0)) domain_fail("reg_gamma_p", "x must be non-negative");
  if (x == 0.0) return 0.0;
  if (x == INFINITY) return 1.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_continued_fraction(a, x);
}

double reg_gamma_q(double a, double x) {
  if (!(a > 0.0)) domain_fail("reg_gamma_q", "a must be positive");
  if (!(x >= 0.0)) domain_fail("reg_gamma_q", "x must be non-negative");
  if (x == 0.0) return 1.0;
  if (x == INFINITY) return 0.0;
  if (x < a + 1.0) return 1.0 - gamma_series(a, x);
  return gamma_continued_fraction(a, x);
}

double chi_square_cdf(double x, double df) {
  if (!(df > 0.0)) domain_fail("chi_square_cdf", "df must be positive");
  if (x <= 0.0) return 0.0;
  return reg_gamma_p(df / 2.0, x / 2.0);
}

double chi_square_sf(double x, double df) {
  if (!(df > 0.0)) domain_fail("chi_square_sf", "df must be positive");
  if (x <= 0.0) return 1.0;
  return reg_gamma_q(df / 2.0, x / 2.0);
}

double chi_square_quantile(double p, double df) {
  if (!(df > 0.0)) domain_fail("chi_square_quantile", "df must be positive");
  if (!(p > 0.0 && p < 1.0)) domain_fail("chi_square_quantile", "p must lie in (0, 1)");
  const bool upper = p > 0.5;
  const double target = upper ? 1.0 - p : p;
  // g(x) increasing in x: distance of the relevant tail from its target.
  auto g = [&](double x) {
    return upper ? target - chi_square_sf(x, df) : chi_square_cdf(x, df) - target;
  };
  double lo = 0.0;
  double hi = std::max(1.0, df);
  while (g(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
  }
  const double half = df / 2.0;
  const double log_norm = half * std::log(2.0) + log_gamma(half);
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    const double f = g(x);
    if (f == 0.0) return x;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double dens = std::exp((half - 1.0) * std::log(x) - x / 2.0 - log_norm);
    double next = x - f / dens;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, x) || hi - lo <= 1e-15 * hi) {
      return next;
    }
    x = next;
  }
  return x;
}

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double softplus(double eta) {
  if (eta > 0.0) return eta + std::log1p(std::exp(-eta));
  return std::log1p(std::exp(eta));
}

}  // namespace mzoib::numkit
