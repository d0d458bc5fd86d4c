#include "mzoib/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mzoib/errors.hpp"
#include "mzoib/numkit.hpp"
#include "mzoib/parallel.hpp"
#include "mzoib/simulate.hpp"

namespace mzoib {

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

bool try_score(const Eigen::VectorXd& x, const DesignSet& design, const Eigen::VectorXd& y,
               Eigen::VectorXd& out) {
  try {
    out = composite_score(x, design, y);
    return out.allFinite();
  } catch (const NumericalError&) {
    return false;
  }
}

// Names of the coefficients loading on the near-null eigenvectors of h.
std::string null_directions(const Eigen::MatrixXd& h, const std::vector<std::string>& names) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  std::ostringstream os;
  bool first = true;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (std::abs(ev(k)) > 1e-10 * scale) continue;
    const Eigen::VectorXd v = es.eigenvectors().col(k);
    os << (first ? "" : "; ") << "direction {";
    bool first_name = true;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (std::abs(v(j)) < 0.1) continue;
      os << (first_name ? "" : ", ") << names[static_cast<std::size_t>(j)];
      first_name = false;
    }
    os << "}";
    first = false;
  }
  return os.str();
}

bool near_singular(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  return !(scale > 0.0) || ev.cwiseAbs().minCoeff() <= 1e-10 * scale;
}

}  // namespace

int HacConfig::resolve(Eigen::Index n) const {
  if (max_lag) {
    if (*max_lag < 0) throw ConfigError("HAC max_lag must be non-negative");
    return *max_lag;
  }
  return static_cast<int>(std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
}

std::vector<double> bartlett_weights(int max_lag) {
  if (max_lag < 0) throw ConfigError("HAC max_lag must be non-negative");
  std::vector<double> w(static_cast<std::size_t>(max_lag) + 2);
  for (int l = 0; l <= max_lag + 1; ++l) {
    w[static_cast<std::size_t>(l)] = std::max(0.0, 1.0 - l / (max_lag + 1.0));
  }
  return w;
}

SeMethod parse_se_method(std::string_view name) {
  if (name == "hac") return SeMethod::hac;
  if (name == "bootstrap") return SeMethod::bootstrap;
  throw ConfigError("unknown standard-error method '" + std::string(name) +
                    "' (expected hac or bootstrap)");
}

std::string to_string(SeMethod method) { return method == SeMethod::hac ? "hac" : "bootstrap"; }

Eigen::VectorXd CovarianceEstimate::std_errors() const {
  return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

Eigen::MatrixXd sensitivity_matrix(const Eigen::VectorXd& flat, const DesignSet& design,
                                   const Eigen::VectorXd& y) {
  const Eigen::Index p = flat.size();
  const auto n = static_cast<double>(y.size());
  Eigen::VectorXd s0;
  if (!try_score(flat, design, y, s0)) {
    throw NumericalError("score is not defined at the estimate");
  }
  Eigen::MatrixXd d(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(flat(j)));
    Eigen::VectorXd xp = flat, xm = flat;
    xp(j) += h;
    xm(j) -= h;
    Eigen::VectorXd sp, sm;
    const bool okp = try_score(xp, design, y, sp);
    const bool okm = try_score(xm, design, y, sm);
    if (okp && okm) {
      d.col(j) = (sp - sm) / (2.0 * h);
    } else if (okp) {
      d.col(j) = (sp - s0) / h;
    } else if (okm) {
      d.col(j) = (s0 - sm) / h;
    } else {
      throw NumericalError("score is infeasible on both sides of the estimate");
    }
  }
  return symmetrize(-d / n);
}

Eigen::MatrixXd variability_matrix(const Eigen::MatrixXd& scores, int max_lag) {
  const Eigen::Index n = scores.rows();
  const std::vector<double> w = bartlett_weights(max_lag);
  Eigen::MatrixXd j = scores.transpose() * scores;
  for (int l = 1; l <= max_lag && l < n; ++l) {
    const Eigen::MatrixXd g =
        scores.bottomRows(n - l).transpose() * scores.topRows(n - l);
    j += w[static_cast<std::size_t>(l)] * (g + g.transpose());
  }
  return symmetrize(j / static_cast<double>(n));
}

CovarianceEstimate hac_covariance(const StageOneFit& fit, const DesignSet& design,
                                  const Eigen::VectorXd& y, const HacConfig& cfg) {
  const Eigen::VectorXd flat = fit.theta_hat.flatten();
  CovarianceEstimate out;
  out.method = SeMethod::hac;
  out.max_lag = cfg.resolve(y.size());
  out.h_hat = sensitivity_matrix(flat, design, y);
  out.j_hat = variability_matrix(score_contributions(flat, design, y), out.max_lag);
  if (near_singular(out.h_hat)) {
    throw NumericalError("sensitivity matrix is singular along " +
                         null_directions(out.h_hat, parameter_names(design)));
  }
  const Eigen::MatrixXd h_inv = out.h_hat.inverse();
  out.cov = symmetrize(h_inv * out.j_hat * h_inv / static_cast<double>(y.size()));
  if (!fit.converged) out.warnings.push_back("stage-1 fit did not converge");
  return out;
}

CovarianceEstimate bootstrap_se(const StageOneFit& fit1, const StageTwoFit& fit2,
                                const DesignSet& design, const BootstrapConfig& cfg) {
  if (cfg.replicates < 2) throw ConfigError("bootstrap needs at least 2 replicates");
  const PerTimeParams params = per_time_params(fit1.theta_hat, design);
  const CopulaFamily family{fit2.family, fit2.rho_hat};
  const auto r = static_cast<std::size_t>(cfg.replicates);
  std::vector<Eigen::VectorXd> est(r);
  std::vector<char> ok(r, 0);

  parallel_for(r, cfg.workers, [&](std::size_t b) {
    RngStream rng(cfg.seed, RngStream::nested_id(cfg.replicate_index, 1000 + b));
    try {
      const Eigen::VectorXd yb = markov_series(params, family, rng);
      const StageOneFit f = fit_stage1(design, yb, fit1.theta_hat);
      if (f.converged) {
        est[b] = f.theta_hat.flatten();
        ok[b] = 1;
      }
    } catch (const NumericalError&) {
    } catch (const ConfigError&) {
    }
  });

  std::vector<Eigen::VectorXd> good;
  for (std::size_t b = 0; b < r; ++b) {
    if (ok[b]) good.push_back(est[b]);
  }
  CovarianceEstimate out;
  out.method = SeMethod::bootstrap;
  out.replicates_used = static_cast<int>(good.size());
  out.replicates_failed = cfg.replicates - out.replicates_used;
  if (out.replicates_failed * 2 > cfg.replicates || good.size() < 2) {
    std::ostringstream os;
    os << "bootstrap failed: " << out.replicates_failed << " of " << cfg.replicates
       << " replicates did not converge";
    throw NumericalError(os.str());
  }
  if (out.replicates_failed * 10 > cfg.replicates) {
    std::ostringstream os;
    os << out.replicates_failed << " of " << cfg.replicates
       << " bootstrap replicates did not converge and were dropped";
    out.warnings.push_back(os.str());
    spdlog::warn("{}", os.str());
  }
  const Eigen::Index p = good.front().size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (const auto& e : good) mean += e;
  mean /= static_cast<double>(good.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
  for (const auto& e : good) cov += (e - mean) * (e - mean).transpose();
  out.cov = symmetrize(cov / static_cast<double>(good.size() - 1));
  return out;
}

WaldTest wald_test(const Eigen::VectorXd& theta_hat, const Eigen::MatrixXd& cov,
                   const Eigen::MatrixXd& a, double alpha) {
  if (a.cols() != theta_hat.size() || cov.rows() != theta_hat.size() ||
      cov.cols() != theta_hat.size()) {
    throw ShapeError("Wald test dimensions do not match");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  Eigen::FullPivLU<Eigen::MatrixXd> lu_a(a);
  if (a.rows() < 1 || lu_a.rank() != a.rows()) {
    throw ConfigError("Wald constraint matrix must have full row rank");
  }
  const Eigen::VectorXd r = a * theta_hat;
  const Eigen::MatrixXd m = symmetrize(a * cov * a.transpose());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw NumericalError("Wald test is degenerate: A V A' is singular");
  WaldTest out;
  out.a = a;
  out.statistic = std::max(0.0, r.dot(lu.solve(r)));
  out.df = static_cast<int>(a.rows());
  out.p_value = numkit::chi_square_sf(out.statistic, out.df);
  out.alpha = alpha;
  out.reject = out.statistic > numkit::chi_square_quantile(1.0 - alpha, out.df);
  return out;
}

std::string to_string(ItsHypothesis h) {
  switch (h) {
    case ItsHypothesis::level:
      return "level_change";
    case ItsHypothesis::trend:
      return "trend_change";
    case ItsHypothesis::level_and_trend:
      return "level_and_trend_change";
  }
  return "";
}

Eigen::MatrixXd its_constraint(const DesignSet& design, ItsHypothesis h) {
  if (design.x3.cols() < 4) throw ShapeError("marginal-mean design lacks the ITS columns");
  const Eigen::Index off = block_offset(design, 2);
  const Eigen::Index p = design.n_params();
  Eigen::MatrixXd a;
  if (h == ItsHypothesis::level_and_trend) {
    a = Eigen::MatrixXd::Zero(2, p);
    a(0, off + 2) = 1.0;
    a(1, off + 3) = 1.0;
  } else {
    a = Eigen::MatrixXd::Zero(1, p);
    a(0, off + (h == ItsHypothesis::level ? 2 : 3)) = 1.0;
  }
  return a;
}

std::vector<Interval> confidence_intervals(const Eigen::VectorXd& estimate,
                                           const Eigen::VectorXd& se, double alpha) {
  if (estimate.size() != se.size()) throw ShapeError("estimates and SEs differ in length");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const double z = numkit::normal_quantile(1.0 - alpha / 2.0);
  std::vector<Interval> out(static_cast<std::size_t>(estimate.size()));
  for (Eigen::Index j = 0; j < estimate.size(); ++j) {
    if (!(se(j) >= 0.0)) throw DomainError("standard errors must be non-negative");
    if (se(j) == 0.0) spdlog::warn("zero standard error for coefficient {}: point interval", j);
    out[static_cast<std::size_t>(j)] = {estimate(j) - z * se(j), estimate(j) + z * se(j)};
  }
  return out;
}

ChangePointSelection select_changepoint(const std::function<DesignSet(int)>& make_design,
                                        const Eigen::VectorXd& y, const std::vector<int>& candidates,
                                        const HacConfig& hac, const CbicOptions& options,
                                        int workers) {
  if (candidates.empty()) throw ConfigError("change-point selection needs candidates");
  ChangePointSelection out;
  out.candidates = candidates;
  out.details.resize(candidates.size());
  const double log_n = std::log(static_cast<double>(y.size()));

  parallel_for(candidates.size(), workers, [&](std::size_t i) {
    CandidateResult& res = out.details[i];
    res.tau = candidates[i];
    try {
      const DesignSet design = make_design(candidates[i]);
      const StageOneFit fit = fit_stage1(design, y, std::nullopt, options.optim);
      if (!fit.converged) throw NumericalError("stage-1 fit did not converge");
      const CovarianceEstimate c = hac_covariance(fit, design, y, hac);
      Eigen::LDLT<Eigen::MatrixXd> j_ldlt(c.j_hat);
      if (j_ldlt.info() != Eigen::Success || !j_ldlt.isPositive()) {
        throw NumericalError("variability matrix is not positive definite");
      }
      res.loglik = fit.loglik;
      res.penalty = j_ldlt.solve(c.h_hat).trace();
      res.cbic = (options.doubled_loglik ? -2.0 : -1.0) * fit.loglik + log_n * res.penalty;
      res.ok = std::isfinite(res.cbic);
      if (!res.ok) res.error = "non-finite cBIC";
    } catch (const std::exception& e) {
      res.ok = false;
      res.error = e.what();
    }
  });

  for (const auto& res : out.details) {
    out.cbic_values.push_back(res.ok ? res.cbic : std::numeric_limits<double>::infinity());
  }
  bool any = false;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& res : out.details) {
    if (!res.ok) continue;
    if (!any || res.cbic < best || (res.cbic == best && res.tau < out.selected_tau)) {
      best = res.cbic;
      out.selected_tau = res.tau;
      any = true;
    }
  }
  if (!any) throw NumericalError("change-point selection failed: no candidate could be fitted");
  return out;
}

}  // namespace mzoib
