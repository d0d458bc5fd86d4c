#include "mzoib/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "mzoib/errors.hpp"

namespace mzoib::numkit {

namespace {

constexpr double kArmijo = 1e-4;

bool usable(double v) { return std::isfinite(v); }

struct Incumbent {
  Eigen::VectorXd x;
  double f;
  int iterations = 0;
};

// BFGS on -f. Returns the best point reached; `g` holds the gradient there.
Incumbent bfgs(const Objective& f, const Gradient& grad, Incumbent start,
               Eigen::VectorXd& g, const OptimOptions& opt, bool& converged) {
  const Eigen::Index n = start.x.size();
  Eigen::VectorXd x = start.x;
  double fx = start.f;
  g = grad(x);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;
  if (opt.inverse_hessian.rows() == n && opt.inverse_hessian.cols() == n &&
      opt.inverse_hessian.allFinite()) {
    h_inv = opt.inverse_hessian;
    fresh = false;
  }
  int iter = 0;
  int stalls = 0;
  converged = false;

  while (iter < opt.max_iter) {
    if (!g.allFinite()) break;
    if (g.lpNorm<Eigen::Infinity>() <= opt.grad_tol) {
      converged = true;
      break;
    }
    ++iter;
    Eigen::VectorXd d = h_inv * g;
    double slope = g.dot(d);
    if (!(slope > 0.0)) {
      h_inv.setIdentity();
      fresh = true;
      d = g;
      slope = g.squaredNorm();
    }
    double alpha = 1.0;
    if (fresh) alpha = std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>());

    Eigen::VectorXd x_new;
    double f_new = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int k = 0; k < 80; ++k) {
      x_new = x + alpha * d;
      f_new = f(x_new);
      // Allow for rounding in f once the predicted gain is at noise level.
      const double noise = 1e-13 * (1.0 + std::abs(fx));
      if (usable(f_new) && f_new >= fx + kArmijo * alpha * slope - noise) {
        accepted = true;
        break;
      }
      alpha *= usable(f_new) ? 0.5 : 0.25;
    }
    if (!accepted) {
      if (fresh) break;  // steepest ascent failed too
      h_inv.setIdentity();
      fresh = true;
      continue;
    }

    const Eigen::VectorXd g_new = grad(x_new);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = g - g_new;  // curvature of -f
    const bool flat = std::abs(f_new - fx) <= 1e-13 * (1.0 + std::abs(fx));
    stalls = (flat && g_new.lpNorm<Eigen::Infinity>() >= g.lpNorm<Eigen::Infinity>())
                 ? stalls + 1
                 : 0;
    x = x_new;
    fx = f_new;
    g = g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) h_inv *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h_inv * y;
      h_inv += ((sy + y.dot(hy)) * rho * rho) * (s * s.transpose()) -
               rho * (hy * s.transpose() + s * hy.transpose());
      fresh = false;
    }
    if (stalls >= 5) break;
  }
  return {x, fx, start.iterations + iter};
}

Incumbent nelder_mead(const Objective& f, Incumbent start, int max_iter) {
  const Eigen::Index n = start.x.size();
  // Minimize -f; infeasible points rank worst.
  auto cost = [&](const Eigen::VectorXd& x) {
    const double v = f(x);
    return usable(v) ? -v : std::numeric_limits<double>::infinity();
  };
  std::vector<Eigen::VectorXd> pts(n + 1, start.x);
  std::vector<double> vals(n + 1, -start.f);
  for (Eigen::Index i = 0; i < n; ++i) {
    pts[i + 1](i) += 0.1 * std::max(1.0, std::abs(start.x(i)));
    vals[i + 1] = cost(pts[i + 1]);
  }
  std::vector<std::size_t> order(n + 1);
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[n - 1];

    double size = 0.0;
    for (Eigen::Index i = 0; i <= n; ++i) {
      size = std::max(size, (pts[i] - pts[best]).lpNorm<Eigen::Infinity>());
    }
    const double spread = vals[worst] - vals[best];
    if (size < 1e-10 * std::max(1.0, pts[best].lpNorm<Eigen::Infinity>()) &&
        spread <= 1e-13 * std::max(1.0, std::abs(vals[best]))) {
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (static_cast<std::size_t>(i) != worst) centroid += pts[i];
    }
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
    const double fr = cost(xr);
    if (fr < vals[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = cost(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = cost(xc);
    if (fc < std::min(fr, vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (static_cast<std::size_t>(i) == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = cost(pts[i]);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  const auto idx = static_cast<std::size_t>(it - vals.begin());
  if (-vals[idx] >= start.f) return {pts[idx], -vals[idx], start.iterations + iter};
  start.iterations += iter;
  return start;
}

}  // namespace

Eigen::VectorXd numeric_gradient(const Objective& f, const Eigen::VectorXd& x,
                                 double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x(i)));
    xp(i) = x(i) + step;
    const double fp = f(xp);
    xp(i) = x(i) - step;
    const double fm = f(xp);
    xp(i) = x(i);
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

OptimResult maximize(const Objective& f, const Gradient& grad,
                     const Eigen::VectorXd& x0, const OptimOptions& options) {
  const double f0 = f(x0);
  if (!usable(f0)) {
    throw NumericalError("maximize: objective is not finite at the starting point");
  }
  Incumbent inc{x0, f0, 0};
  OptimResult out;

  if (grad) {
    Eigen::VectorXd g;
    bool converged = false;
    inc = bfgs(f, grad, inc, g, options, converged);
    if (!converged && options.simplex_restart) {
      inc = nelder_mead(f, inc, options.max_iter * static_cast<int>(x0.size() + 1));
      inc = bfgs(f, grad, inc, g, options, converged);
    }
    out.gradient_norm = g.allFinite() ? g.lpNorm<Eigen::Infinity>()
                                      : std::numeric_limits<double>::infinity();
    out.converged = converged;
  } else {
    const int budget = options.max_iter * static_cast<int>(x0.size() + 1);
    for (int restart = 0; restart < 4; ++restart) {
      inc = nelder_mead(f, inc, budget);
      out.gradient_norm = numeric_gradient(f, inc.x).lpNorm<Eigen::Infinity>();
      if (out.gradient_norm <= options.grad_tol) {
        out.converged = true;
        break;
      }
    }
  }
  out.argmax = inc.x;
  out.value = inc.f;
  out.iterations = inc.iterations;
  return out;
}

ScalarOptimum maximize_bounded(const std::function<double(double)>& f, double lo,
                               double hi, double tol, int max_iter) {
  // Brent's localmin applied to -f.
  constexpr double kGolden = 0.3819660112501051;
  auto cost = [&](double x) {
    const double v = f(x);
    return usable(v) ? -v : std::numeric_limits<double>::infinity();
  };
  double a = lo, b = hi;
  double x = a + kGolden * (b - a);
  double w = x, v = x;
  double fx = cost(x);
  double fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  int evals = 1;
  for (int it = 0; it < max_iter; ++it) {
    const double m = 0.5 * (a + b);
    const double tol1 = tol * std::abs(x) + 1e-12;
    const double tol2 = 2.0 * tol1;
    if (std::abs(x - m) <= tol2 - 0.5 * (b - a)) break;
    bool golden = true;
    if (std::abs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::abs(q);
      const double etemp = e;
      e = d;
      if (std::abs(p) < std::abs(0.5 * q * etemp) && p > q * (a - x) && p < q * (b - x)) {
        d = p / q;
        const double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (m > x) ? tol1 : -tol1;
        golden = false;
      }
    }
    if (golden) {
      e = (x >= m) ? a - x : b - x;
      d = kGolden * e;
    }
    const double u = std::abs(d) >= tol1 ? x + d : x + (d > 0 ? tol1 : -tol1);
    const double fu = cost(u);
    ++evals;
    if (fu <= fx) {
      if (u >= x) {
        a = x;
      } else {
        b = x;
      }
      v = w;
      fv = fw;
      w = x;
      fw = fx;
      x = u;
      fx = fu;
    } else {
      if (u < x) {
        a = u;
      } else {
        b = u;
      }
      if (fu <= fw || w == x) {
        v = w;
        fv = fw;
        w = u;
        fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  return {x, -fx, evals};
}

}  // namespace mzoib::numkit
