#include "mzoib/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mzoib/errors.hpp"
#include "mzoib/numkit.hpp"
#include "mzoib/parallel.hpp"

namespace mzoib {

namespace {

constexpr double kClip = 1e-12;

double clip(double u) { return std::clamp(u, kClip, 1.0 - kClip); }

void require_feasible(const PerTimeParams& params) {
  if (params.all_feasible()) return;
  std::ostringstream os;
  os << "parameters infeasible (mu outside (0, 1)) at time indices";
  for (Eigen::Index t : params.infeasible_indices()) os << ' ' << t + 1;
  throw NumericalError(os.str());
}

struct ReplicateOutcome {
  bool ok = false;
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;
  std::vector<char> covered;
  std::vector<char> rejected;
  bool level = false, trend = false, joint = false;
  int tau = 0;
  double rho_hat = 0.0;
};

}  // namespace

Eigen::VectorXd markov_series(const PerTimeParams& params, const CopulaFamily& family,
                              RngStream& rng) {
  family.validate();
  require_feasible(params);
  const auto n = static_cast<Eigen::Index>(params.params.size());
  Eigen::VectorXd y(n);
  double u = rng.uniform_clipped(kClip);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t > 0) u = clip(copula_h_inv(family, rng.uniform_clipped(kClip), u));
    y(t) = zoib_quantile(u, params.params[static_cast<std::size_t>(t)]);
  }
  return y;
}

Eigen::VectorXd markov_series(const Theta& theta, const DesignSet& design,
                              const CopulaFamily& family, RngStream& rng) {
  return markov_series(per_time_params(theta, design), family, rng);
}

Eigen::VectorXd latent_gaussian_series(const PerTimeParams& params, double rho, RngStream& rng) {
  if (!(rho > -1.0 && rho < 1.0)) throw DomainError("latent AR(1) needs |rho| < 1");
  require_feasible(params);
  const auto n = static_cast<Eigen::Index>(params.params.size());
  const double s = std::sqrt(1.0 - rho * rho);
  Eigen::VectorXd y(n);
  double z = numkit::normal_quantile(rng.uniform_clipped(kClip));
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t > 0) z = rho * z + s * numkit::normal_quantile(rng.uniform_clipped(kClip));
    y(t) = zoib_quantile(clip(numkit::normal_cdf(z)), params.params[static_cast<std::size_t>(t)]);
  }
  return y;
}

void McStudyConfig::validate() const {
  if (K < 1) throw ConfigError("K must be at least 1");
  if (n < 3) throw ConfigError("n must be at least 3");
  if (se_method == SeMethod::bootstrap && R < 2) {
    throw ConfigError("bootstrap needs R >= 2");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (select_tau) {
    if (candidates.empty()) throw ConfigError("select_tau requires candidates");
    if (std::find(candidates.begin(), candidates.end(), its.tau) == candidates.end()) {
      throw ConfigError("candidates must contain the true tau");
    }
  }
  family.validate();
  ItsConfig c = its;
  c.n = n;
  c.validate();
}

McStudyReport run_mc_study(const McStudyConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  ItsConfig its = cfg.its;
  its.n = cfg.n;
  const DesignSet truth_design = its_design(its);
  check_shapes(cfg.theta_true, truth_design);
  const PerTimeParams truth_params = per_time_params(cfg.theta_true, truth_design);
  require_feasible(truth_params);
  const Eigen::VectorXd truth = cfg.theta_true.flatten();
  const Eigen::Index p = truth.size();
  const double z = numkit::normal_quantile(1.0 - cfg.alpha / 2.0);
  const double crit = numkit::chi_square_quantile(1.0 - cfg.alpha, 1);

  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(cfg.K));
  parallel_for(outcomes.size(), cfg.workers, [&](std::size_t k) {
    ReplicateOutcome& o = outcomes[k];
    try {
      RngStream rng(cfg.seed, RngStream::nested_id(k, 0));
      const Eigen::VectorXd y = markov_series(truth_params, cfg.family, rng);
      DesignSet design = truth_design;
      o.tau = its.tau;
      if (cfg.select_tau) {
        auto make = [&](int tau) {
          ItsConfig c = its;
          c.tau = tau;
          return its_design(c);
        };
        const ChangePointSelection sel = select_changepoint(make, y, cfg.candidates, cfg.hac);
        o.tau = sel.selected_tau;
        design = make(o.tau);
      }
      const StageOneFit fit = fit_stage1(design, y);
      if (!fit.converged) return;
      CovarianceEstimate cov;
      if (cfg.se_method == SeMethod::hac) {
        cov = hac_covariance(fit, design, y, cfg.hac);
      } else {
        const StageTwoFit fit2 = fit_stage2_copula(cfg.fit_family, fit.theta_hat, design, y);
        o.rho_hat = fit2.rho_hat;
        BootstrapConfig bc;
        bc.replicates = cfg.R;
        bc.seed = cfg.seed;
        bc.replicate_index = k;
        cov = bootstrap_se(fit, fit2, design, bc);
      }
      o.estimate = fit.theta_hat.flatten();
      o.se = cov.std_errors();
      o.covered.resize(static_cast<std::size_t>(p));
      o.rejected.resize(static_cast<std::size_t>(p));
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto i = static_cast<std::size_t>(j);
        o.covered[i] = std::abs(o.estimate(j) - truth(j)) <= z * o.se(j);
        const double ratio = o.estimate(j) / o.se(j);
        o.rejected[i] = o.se(j) > 0.0 && ratio * ratio > crit;
      }
      o.level = wald_test(o.estimate, cov.cov, its_constraint(design, ItsHypothesis::level),
                          cfg.alpha).reject;
      o.trend = wald_test(o.estimate, cov.cov, its_constraint(design, ItsHypothesis::trend),
                          cfg.alpha).reject;
      o.joint = wald_test(o.estimate, cov.cov,
                          its_constraint(design, ItsHypothesis::level_and_trend), cfg.alpha)
                    .reject;
      o.ok = o.estimate.allFinite() && o.se.allFinite();
    } catch (const std::exception& e) {
      spdlog::debug("replicate {} failed: {}", k, e.what());
      o.ok = false;
    }
  });

  McStudyReport rep;
  rep.n = cfg.n;
  rep.K = cfg.K;
  const std::vector<std::string> names = parameter_names(truth_design);
  rep.coefficients.resize(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    rep.coefficients[static_cast<std::size_t>(j)].name = names[static_cast<std::size_t>(j)];
    rep.coefficients[static_cast<std::size_t>(j)].truth = truth(j);
  }
  std::vector<const ReplicateOutcome*> good;
  for (const auto& o : outcomes) {
    if (o.ok) good.push_back(&o);
  }
  rep.converged = static_cast<int>(good.size());
  rep.failed = cfg.K - rep.converged;
  if (good.empty()) {
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
  }
  const auto m = static_cast<double>(good.size());
  for (Eigen::Index j = 0; j < p; ++j) {
    CoefficientSummary& c = rep.coefficients[static_cast<std::size_t>(j)];
    const auto i = static_cast<std::size_t>(j);
    double sum = 0.0, sum_se = 0.0, cov = 0.0, pow = 0.0;
    for (const auto* o : good) {
      sum += o->estimate(j);
      sum_se += o->se(j);
      cov += o->covered[i];
      pow += o->rejected[i];
    }
    c.mean = sum / m;
    c.bias = c.mean - c.truth;
    double ss = 0.0;
    for (const auto* o : good) ss += (o->estimate(j) - c.mean) * (o->estimate(j) - c.mean);
    c.sd = good.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
    c.mean_se = sum_se / m;
    c.coverage = cov / m;
    c.power = pow / m;
  }
  double level = 0.0, trend = 0.0, joint = 0.0, tau_hit = 0.0, rho = 0.0;
  for (const auto* o : good) {
    level += o->level;
    trend += o->trend;
    joint += o->joint;
    tau_hit += o->tau == its.tau;
    rho += o->rho_hat;
  }
  rep.level_test_rate = level / m;
  rep.trend_test_rate = trend / m;
  rep.joint_test_rate = joint / m;
  rep.tau_selected_rate = cfg.select_tau ? tau_hit / m : 0.0;
  rep.mean_rho_hat = cfg.se_method == SeMethod::bootstrap ? rho / m : 0.0;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace mzoib
