#include "mzoib/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mzoib/errors.hpp"
#include "mzoib/numkit.hpp"

namespace mzoib {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Predictors {
  Eigen::VectorXd eta1, eta2, eta3, eta4;
};

Predictors predictors(const Eigen::VectorXd& flat, const DesignSet& d) {
  if (flat.size() != d.n_params()) {
    throw ShapeError("coefficient vector does not match the design");
  }
  Predictors p;
  Eigen::Index off = 0;
  p.eta1 = d.x1 * flat.segment(off, d.x1.cols());
  off += d.x1.cols();
  p.eta2 = d.x2 * flat.segment(off, d.x2.cols());
  off += d.x2.cols();
  p.eta3 = d.x3 * flat.segment(off, d.x3.cols());
  off += d.x3.cols();
  p.eta4 = d.x4 * flat.segment(off, d.x4.cols());
  return p;
}

bool interior(double y) { return y > 0.0 && y < 1.0; }

void check_rows(const Eigen::VectorXd& y, const DesignSet& design) {
  if (y.size() != design.rows()) {
    throw ShapeError("series length does not match the design row count");
  }
}

// Inverse of minus the forward-difference Hessian of the score at x, or an
// empty matrix when that is not positive definite.
Eigen::MatrixXd start_inverse_hessian(const Eigen::VectorXd& x, const DesignSet& design,
                                      const Eigen::VectorXd& y) {
  const Eigen::Index p = x.size();
  try {
    const Eigen::VectorXd s0 = composite_score(x, design, y);
    Eigen::MatrixXd h(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
      Eigen::VectorXd xp = x;
      const double step = 1e-6 * std::max(1.0, std::abs(x(j)));
      xp(j) += step;
      h.col(j) = -(composite_score(xp, design, y) - s0) / step;
    }
    h = 0.5 * (h + h.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) return {};
    Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
    return inv.allFinite() ? inv : Eigen::MatrixXd{};
  } catch (const NumericalError&) {
    return {};
  }
}

}  // namespace

void validate_series(const Eigen::VectorXd& y, const DesignSet& design) {
  check_rows(y, design);
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    if (!(y(t) >= 0.0 && y(t) <= 1.0)) {
      std::ostringstream os;
      os << "observation " << t + 1 << " (y=" << y(t) << ") is outside [0, 1]";
      throw ConfigError(os.str());
    }
  }
  if (y.size() < design.n_params() + 2) {
    std::ostringstream os;
    os << "series of length " << y.size() << " is too short for " << design.n_params()
       << " coefficients (need at least " << design.n_params() + 2 << ")";
    throw ConfigError(os.str());
  }
}

double composite_loglik(const Eigen::VectorXd& flat, const DesignSet& design,
                        const Eigen::VectorXd& y) {
  check_rows(y, design);
  const Predictors p = predictors(flat, design);
  double total = 0.0;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    const double yt = y(t);
    total -= numkit::softplus(p.eta1(t));
    if (yt > 0.0) total += p.eta1(t) - numkit::softplus(p.eta2(t));
    if (yt == 1.0) total += p.eta2(t);
    if (interior(yt)) {
      const double e2 = std::exp(p.eta2(t));
      const double mu =
          (1.0 + e2) * (1.0 + std::exp(-p.eta1(t))) / (1.0 + std::exp(-p.eta3(t))) - e2;
      const double phi = std::exp(p.eta4(t));
      const double a = mu * phi;
      const double b = (1.0 - mu) * phi;
      if (!(mu > 0.0 && mu < 1.0) || !std::isfinite(phi) || !(a > 0.0 && b > 0.0)) {
        return kNegInf;
      }
      const double l1y = std::log1p(-yt);
      const double ht = numkit::log_gamma(phi) - numkit::log_gamma(a) - numkit::log_gamma(b);
      total += ht + phi * l1y - std::log(yt) - l1y + a * (std::log(yt) - l1y);
    }
  }
  return std::isnan(total) ? kNegInf : total;
}

double composite_loglik(const Theta& theta, const DesignSet& design, const Eigen::VectorXd& y) {
  check_shapes(theta, design);
  return composite_loglik(theta.flatten(), design, y);
}

Eigen::MatrixXd score_contributions(const Eigen::VectorXd& flat, const DesignSet& design,
                                    const Eigen::VectorXd& y) {
  check_rows(y, design);
  const Predictors p = predictors(flat, design);
  const Eigen::Index n = y.size();
  const Eigen::Index k1 = design.x1.cols(), k2 = design.x2.cols();
  const Eigen::Index k3 = design.x3.cols(), k4 = design.x4.cols();
  Eigen::MatrixXd u(n, design.n_params());
  for (Eigen::Index t = 0; t < n; ++t) {
    const double yt = y(t);
    const double p1 = numkit::logistic(p.eta1(t));
    const double p2 = numkit::logistic(p.eta2(t));
    double g1 = (yt > 0.0 ? 1.0 : 0.0) - p1;
    double g2 = (yt == 1.0 ? 1.0 : 0.0) - (yt > 0.0 ? p2 : 0.0);
    double g3 = 0.0;
    double g4 = 0.0;
    if (interior(yt)) {
      const double e1m = std::exp(-p.eta1(t));
      const double e2 = std::exp(p.eta2(t));
      const double e3m = std::exp(-p.eta3(t));
      const double mu = (1.0 + e2) * (1.0 + e1m) / (1.0 + e3m) - e2;
      const double phi = std::exp(p.eta4(t));
      if (!(mu > 0.0 && mu < 1.0) || !std::isfinite(phi) || !(mu * phi > 0.0) ||
          !((1.0 - mu) * phi > 0.0)) {
        std::ostringstream os;
        os << "score evaluated at an infeasible point (t=" << t + 1 << ", mu=" << mu << ")";
        throw NumericalError(os.str());
      }
      const double dmu1 = -(1.0 + e2) * e1m / (1.0 + e3m);
      const double dmu2 = e2 * ((1.0 + e1m) / (1.0 + e3m) - 1.0);
      const double dmu3 = (1.0 + e2) * (1.0 + e1m) * e3m / ((1.0 + e3m) * (1.0 + e3m));
      const double lgt = std::log(yt) - std::log1p(-yt);
      const double psi_a = numkit::digamma(mu * phi);
      const double psi_b = numkit::digamma((1.0 - mu) * phi);
      const double dmu = phi * (lgt - psi_a + psi_b);
      g1 += dmu * dmu1;
      g2 += dmu * dmu2;
      g3 = dmu * dmu3;
      g4 = phi * (numkit::digamma(phi) - mu * psi_a - (1.0 - mu) * psi_b + std::log1p(-yt) +
                  mu * lgt);
    }
    u.block(t, 0, 1, k1) = g1 * design.x1.row(t);
    u.block(t, k1, 1, k2) = g2 * design.x2.row(t);
    u.block(t, k1 + k2, 1, k3) = g3 * design.x3.row(t);
    u.block(t, k1 + k2 + k3, 1, k4) = g4 * design.x4.row(t);
  }
  return u;
}

Eigen::VectorXd composite_score(const Eigen::VectorXd& flat, const DesignSet& design,
                                const Eigen::VectorXd& y) {
  return score_contributions(flat, design, y).colwise().sum().transpose();
}

Eigen::VectorXd composite_score(const Theta& theta, const DesignSet& design,
                                const Eigen::VectorXd& y) {
  check_shapes(theta, design);
  return composite_score(theta.flatten(), design, y);
}

Theta initial_theta(const DesignSet& design, const Eigen::VectorXd& y) {
  check_rows(y, design);
  const auto n = static_cast<double>(y.size());
  double n_pos = 0.0, n_one = 0.0, sum_int = 0.0, sumsq_int = 0.0, n_int = 0.0;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    if (y(t) > 0.0) n_pos += 1.0;
    if (y(t) == 1.0) n_one += 1.0;
    if (interior(y(t))) {
      n_int += 1.0;
      sum_int += y(t);
      sumsq_int += y(t) * y(t);
    }
  }
  auto haldane = [](double k, double m) {
    if (k == 0.0 || k == m) return (k + 0.5) / (m + 1.0);
    return k / m;
  };
  const double p1 = haldane(n_pos, n);
  const double p2 = haldane(n_one, n_pos);

  Theta th = Theta::zeros(design);
  th.beta1(0) = numkit::logit(p1);
  th.beta2(0) = numkit::logit(p2);

  Eigen::VectorXd z(y.size());
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    z(t) = numkit::logit(std::clamp(y(t), 0.005, 0.995));
  }
  th.beta3 = design.x3.colPivHouseholderQr().solve(z);
  if (!th.beta3.allFinite()) th.beta3.setZero();

  const double m = n_int > 0.0 ? sum_int / n_int : 0.5;
  double phi = 2.0;
  if (n_int >= 2.0) {
    const double var = (sumsq_int - n_int * m * m) / (n_int - 1.0);
    if (var > 0.0) phi = m * (1.0 - m) / var - 1.0;
  }
  th.beta4(0) = std::log(std::clamp(phi, 0.5, 1e4));

  Theta safe = th;
  safe.beta3.setZero();
  safe.beta3(0) = numkit::logit(std::clamp(p1 * (p2 + (1.0 - p2) * m), 1e-6, 1.0 - 1e-6));

  const Eigen::VectorXd a = th.flatten();
  const Eigen::VectorXd b = safe.flatten();
  for (double lambda : {1.0, 0.75, 0.5, 0.25, 0.1, 0.0}) {
    const Eigen::VectorXd c = lambda * a + (1.0 - lambda) * b;
    if (std::isfinite(composite_loglik(c, design, y))) return Theta::unflatten(c, design);
  }
  return safe;
}

StageOneFit fit_stage1(const DesignSet& design, const Eigen::VectorXd& y,
                       const std::optional<Theta>& init, const numkit::OptimOptions& options) {
  validate_series(y, design);
  Eigen::VectorXd x0;
  if (init) {
    check_shapes(*init, design);
    x0 = init->flatten();
    if (!std::isfinite(composite_loglik(x0, design, y))) {
      x0 = initial_theta(design, y).flatten();
    }
  } else {
    x0 = initial_theta(design, y).flatten();
  }
  if (!std::isfinite(composite_loglik(x0, design, y))) {
    throw NumericalError("no feasible starting value for the composite likelihood");
  }
  auto f = [&](const Eigen::VectorXd& x) { return composite_loglik(x, design, y); };
  auto g = [&](const Eigen::VectorXd& x) { return composite_score(x, design, y); };
  numkit::OptimOptions opt = options;
  if (opt.inverse_hessian.size() == 0) opt.inverse_hessian = start_inverse_hessian(x0, design, y);
  const numkit::OptimResult r = numkit::maximize(f, g, x0, opt);

  StageOneFit fit;
  fit.theta_hat = Theta::unflatten(r.argmax, design);
  fit.loglik = r.value;
  fit.score_at_opt = composite_score(r.argmax, design, y);
  fit.converged = r.converged;
  fit.iterations = r.iterations;
  return fit;
}

double stage2_objective(const CopulaFamily& fam, const PerTimeParams& params,
                        const Eigen::VectorXd& y, bool include_margins) {
  if (static_cast<std::size_t>(y.size()) != params.params.size()) {
    throw ShapeError("series length does not match the per-time parameters");
  }
  double total = 0.0;
  for (Eigen::Index t = 1; t < y.size(); ++t) {
    const auto i = static_cast<std::size_t>(t);
    const PairDensity pd = pairwise_log_density(fam, y(t), y(t - 1), params.params[i],
                                                params.params[i - 1], include_margins);
    if (pd.degenerate) return kNegInf;
    total += pd.log_value;
  }
  return total;
}

StageTwoFit fit_stage2_copula(CopulaKind kind, const Theta& theta_hat, const DesignSet& design,
                              const Eigen::VectorXd& y, const StageTwoOptions& options) {
  validate_series(y, design);
  const PerTimeParams params = per_time_params(theta_hat, design);
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    if (!params.feasible[static_cast<std::size_t>(t)]) {
      std::ostringstream os;
      os << "stage-1 estimate gives an infeasible conditional mean at t=" << t + 1;
      throw NumericalError(os.str());
    }
  }
  auto objective = [&](double rho) {
    const double v = stage2_objective({kind, rho}, params, y, options.include_margins);
    return std::isnan(v) ? kNegInf : v;
  };

  const ParamInterval range = estimation_bounds(kind);
  const int m = std::max(options.grid_points, 3);
  std::vector<double> grid(static_cast<std::size_t>(m));
  std::vector<double> vals(grid.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    grid[i] = range.lo + (range.hi - range.lo) * static_cast<double>(i) / (m - 1);
    vals[i] = objective(grid[i]);
    if (vals[i] > vals[best]) best = i;
  }
  const auto [lo_it, hi_it] = std::minmax_element(vals.begin(), vals.end());
  StageTwoFit fit;
  fit.family = kind;
  if (!std::isfinite(vals[best]) ||
      (std::isfinite(*lo_it) && *hi_it - *lo_it <= 1e-10 * std::max(1.0, std::abs(*hi_it)))) {
    spdlog::warn("copula pseudo-likelihood is flat in rho; returning the independence value");
    fit.flat = true;
    fit.rho_hat = independence_value(kind);
    fit.pseudo_loglik = objective(fit.rho_hat);
    return fit;
  }
  const double lo = grid[best == 0 ? 0 : best - 1];
  const double hi = grid[std::min(best + 1, grid.size() - 1)];
  const numkit::ScalarOptimum opt = numkit::maximize_bounded(objective, lo, hi, 1e-8);
  if (opt.value >= vals[best]) {
    fit.rho_hat = opt.argmax;
    fit.pseudo_loglik = opt.value;
  } else {
    fit.rho_hat = grid[best];
    fit.pseudo_loglik = vals[best];
  }
  return fit;
}

}  // namespace mzoib
