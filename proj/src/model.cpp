#include "mzoib/model.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "mzoib/errors.hpp"
#include "mzoib/numkit.hpp"

namespace mzoib {

TimeTransform parse_transform(std::string_view name) {
  if (name == "identity") return TimeTransform::identity;
  if (name == "log") return TimeTransform::log;
  throw ConfigError("unknown time transform '" + std::string(name) +
                    "' (expected identity or log)");
}

std::string to_string(TimeTransform transform) {
  return transform == TimeTransform::log ? "log" : "identity";
}

void ItsConfig::validate() const {
  if (n < 3) throw ConfigError("ITS series length n must be at least 3");
  if (!(tau > 1 && tau < n)) {
    std::ostringstream os;
    os << "change point tau=" << tau << " must satisfy 1 < tau < n=" << n;
    throw ConfigError(os.str());
  }
}

void DesignSet::validate() const {
  const Eigen::Index n = x1.rows();
  if (x2.rows() != n || x3.rows() != n || x4.rows() != n) {
    throw ShapeError("design matrices must have equal row counts");
  }
  for (int b = 0; b < 4; ++b) {
    const auto& x = block(b);
    if (x.cols() < 1) throw ShapeError("each design matrix needs an intercept column");
    if (!x.allFinite()) throw ShapeError("design matrices must not contain missing values");
    if (!(x.col(0).array() == 1.0).all()) {
      throw ShapeError("first column of each design matrix must be the intercept");
    }
  }
}

const Eigen::MatrixXd& DesignSet::block(int b) const {
  switch (b) {
    case 0:
      return x1;
    case 1:
      return x2;
    case 2:
      return x3;
    default:
      return x4;
  }
}

Eigen::VectorXd Theta::flatten() const {
  Eigen::VectorXd out(size());
  out << beta1, beta2, beta3, beta4;
  return out;
}

Theta Theta::unflatten(const Eigen::VectorXd& flat, const DesignSet& design) {
  if (flat.size() != design.n_params()) {
    throw ShapeError("stacked coefficient vector does not match the design");
  }
  Theta th;
  Eigen::Index off = 0;
  th.beta1 = flat.segment(off, design.x1.cols());
  off += design.x1.cols();
  th.beta2 = flat.segment(off, design.x2.cols());
  off += design.x2.cols();
  th.beta3 = flat.segment(off, design.x3.cols());
  off += design.x3.cols();
  th.beta4 = flat.segment(off, design.x4.cols());
  return th;
}

Theta Theta::zeros(const DesignSet& design) {
  return {Eigen::VectorXd::Zero(design.x1.cols()), Eigen::VectorXd::Zero(design.x2.cols()),
          Eigen::VectorXd::Zero(design.x3.cols()), Eigen::VectorXd::Zero(design.x4.cols())};
}

Eigen::Index block_offset(const DesignSet& design, int block) {
  Eigen::Index off = 0;
  for (int b = 0; b < block; ++b) off += design.block(b).cols();
  return off;
}

std::vector<std::string> parameter_names(const DesignSet& design) {
  std::vector<std::string> names;
  for (int b = 0; b < 4; ++b) {
    for (Eigen::Index j = 0; j < design.block(b).cols(); ++j) {
      names.push_back("beta" + std::to_string(b + 1) + "_" + std::to_string(j));
    }
  }
  return names;
}

double transform_time(double t, TimeTransform transform) {
  if (transform == TimeTransform::identity) return t;
  if (!(t > 0.0)) throw ConfigError("log time transform needs positive times");
  return std::log(t);
}

DesignSet its_design(const ItsConfig& cfg) {
  cfg.validate();
  std::vector<double> times(static_cast<std::size_t>(cfg.n));
  std::iota(times.begin(), times.end(), 1.0);
  return its_design(cfg, times);
}

DesignSet its_design(const ItsConfig& cfg, std::span<const double> times,
                     const Eigen::MatrixXd& extra_x3,
                     const std::vector<std::string>& extra_names) {
  const auto n = static_cast<Eigen::Index>(times.size());
  if (n < 3) throw ConfigError("ITS series needs at least 3 time points");
  for (Eigen::Index i = 1; i < n; ++i) {
    if (!(times[i] > times[i - 1])) throw ConfigError("times must be strictly increasing");
  }
  if (!(cfg.tau > times.front() && cfg.tau < times.back())) {
    std::ostringstream os;
    os << "change point tau=" << cfg.tau << " must lie strictly inside the observed times ("
       << times.front() << ", " << times.back() << ")";
    throw ConfigError(os.str());
  }
  if (extra_x3.size() > 0 && extra_x3.rows() != n) {
    throw ShapeError("extra covariates must have one row per time point");
  }
  const Eigen::Index extra = extra_x3.size() > 0 ? extra_x3.cols() : 0;

  const double t_tau = transform_time(cfg.tau, cfg.transform);
  DesignSet d;
  d.x1 = Eigen::MatrixXd::Ones(n, 1);
  d.x2 = Eigen::MatrixXd::Ones(n, 1);
  d.x3.resize(n, 4 + extra);
  d.x4.resize(n, cfg.dispersion_change ? 2 : 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double tt = transform_time(times[i], cfg.transform);
    const double post = tt >= t_tau ? 1.0 : 0.0;
    d.x3(i, 0) = 1.0;
    d.x3(i, 1) = tt;
    d.x3(i, 2) = post;
    d.x3(i, 3) = std::max(tt - t_tau, 0.0);
    if (extra > 0) d.x3.row(i).tail(extra) = extra_x3.row(i);
    d.x4(i, 0) = 1.0;
    if (cfg.dispersion_change) d.x4(i, 1) = post;
  }
  d.column_names[0] = {"intercept"};
  d.column_names[1] = {"intercept"};
  d.column_names[2] = {"intercept", "time", "level_change", "trend_change"};
  for (Eigen::Index j = 0; j < extra; ++j) {
    d.column_names[2].push_back(static_cast<std::size_t>(j) < extra_names.size()
                                    ? extra_names[static_cast<std::size_t>(j)]
                                    : "x" + std::to_string(j));
  }
  d.column_names[3] = {"intercept"};
  if (cfg.dispersion_change) d.column_names[3].push_back("dispersion_change");
  return d;
}

void check_shapes(const Theta& theta, const DesignSet& design) {
  if (theta.beta1.size() != design.x1.cols() || theta.beta2.size() != design.x2.cols() ||
      theta.beta3.size() != design.x3.cols() || theta.beta4.size() != design.x4.cols()) {
    throw ShapeError("coefficient lengths do not match the design matrix column counts");
  }
}

LinearPredictors linear_predictors(const Theta& theta, const DesignSet& design,
                                   Eigen::Index t) {
  check_shapes(theta, design);
  if (t < 0 || t >= design.rows()) throw ShapeError("time index out of range");
  return {design.x1.row(t).dot(theta.beta1), design.x2.row(t).dot(theta.beta2),
          design.x3.row(t).dot(theta.beta3), design.x4.row(t).dot(theta.beta4)};
}

double conditional_mean(const LinearPredictors& eta) {
  const double e2 = std::exp(eta.eta2);
  return (1.0 + e2) * (1.0 + std::exp(-eta.eta1)) / (1.0 + std::exp(-eta.eta3)) - e2;
}

bool PerTimeParams::all_feasible() const {
  return std::all_of(feasible.begin(), feasible.end(), [](char f) { return f != 0; });
}

std::vector<Eigen::Index> PerTimeParams::infeasible_indices() const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < feasible.size(); ++i) {
    if (!feasible[i]) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

PerTimeParams per_time_params(const Theta& theta, const DesignSet& design) {
  check_shapes(theta, design);
  const Eigen::VectorXd eta1 = design.x1 * theta.beta1;
  const Eigen::VectorXd eta2 = design.x2 * theta.beta2;
  const Eigen::VectorXd eta3 = design.x3 * theta.beta3;
  const Eigen::VectorXd eta4 = design.x4 * theta.beta4;
  const auto n = static_cast<std::size_t>(design.rows());
  PerTimeParams out;
  out.params.resize(n);
  out.marginal_mean.resize(n);
  out.feasible.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t = static_cast<Eigen::Index>(i);
    const LinearPredictors eta{eta1(t), eta2(t), eta3(t), eta4(t)};
    ZoibParams& p = out.params[i];
    p.p1 = numkit::logistic(eta.eta1);
    p.p2 = numkit::logistic(eta.eta2);
    p.phi = std::exp(eta.eta4);
    p.mu = conditional_mean(eta);
    out.marginal_mean[i] = numkit::logistic(eta.eta3);
    out.feasible[i] = (p.mu > 0.0 && p.mu < 1.0 && std::isfinite(p.phi) && p.phi > 0.0) ? 1 : 0;
  }
  return out;
}

}  // namespace mzoib
