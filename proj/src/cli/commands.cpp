#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "mzoib/cli.hpp"
#include "mzoib/errors.hpp"
#include "mzoib/estimate.hpp"
#include "mzoib/numkit.hpp"
#include "mzoib/parallel.hpp"

namespace mzoib::cli {

using nlohmann::json;

namespace {

std::string label_for(int block, const std::string& column) {
  if (block == 0) return "log-odds of a non-zero value";
  if (block == 1) return "log-odds of a one given non-zero";
  if (block == 2) {
    if (column == "intercept") return "initial level";
    if (column == "time") return "initial trend";
    if (column == "level_change") return "level change";
    if (column == "trend_change") return "trend change";
    return "covariate " + column;
  }
  if (column == "intercept") return "initial dispersion";
  if (column == "dispersion_change") return "dispersion change";
  return column;
}

json parameter_table(const DesignSet& design) {
  json out = json::array();
  const std::vector<std::string> names = parameter_names(design);
  std::size_t k = 0;
  for (int b = 0; b < 4; ++b) {
    for (const auto& col : design.column_names[static_cast<std::size_t>(b)]) {
      out.push_back({{"name", names[k++]},
                     {"block", "beta" + std::to_string(b + 1)},
                     {"column", col},
                     {"label", label_for(b, col)}});
    }
  }
  return out;
}

json named(const std::vector<std::string>& names, const Eigen::VectorXd& v) {
  json out = json::object();
  for (std::size_t i = 0; i < names.size(); ++i) out[names[i]] = v(static_cast<Eigen::Index>(i));
  return out;
}

json wald_json(const WaldTest& w) {
  return {{"statistic", w.statistic}, {"df", w.df}, {"p_value", w.p_value}, {"reject", w.reject}};
}

std::filesystem::path sibling(const std::filesystem::path& out, const std::string& suffix) {
  std::filesystem::path p = out;
  p.replace_filename(out.stem().string() + suffix);
  return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write output file " + path.string());
  os << text;
  if (!os) throw ConfigError("failed writing output file " + path.string());
}

void emit(const std::optional<std::filesystem::path>& path, const std::string& text) {
  if (path) {
    write_text(*path, text);
  } else {
    std::cout << text;
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("mzoibts");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%^[%l]%$ %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("MZOIBTS_LOG")) {
    const std::string v = env;
    if (v == "error") {
      spdlog::set_level(spdlog::level::err);
    } else if (v == "warn") {
      spdlog::set_level(spdlog::level::warn);
    } else if (v == "info") {
      spdlog::set_level(spdlog::level::info);
    } else if (v == "debug") {
      spdlog::set_level(spdlog::level::debug);
    } else {
      throw ConfigError("MZOIBTS_LOG must be one of error, warn, info, debug");
    }
  }
}

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> output;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "JSON configuration file")->required();
  cmd->add_option("--seed", flags.seed, "random seed (overrides the config)");
  cmd->add_option("--workers", flags.workers, "worker threads (default: available cores)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--output", flags.output, "output path (overrides the config)");
}

int cmd_fit(const CommonFlags& flags) {
  const std::filesystem::path cfg_path = flags.config;
  FitConfig cfg = parse_fit_config(load_json(cfg_path), cfg_path.parent_path());
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.output) cfg.output_path = *flags.output;
  const Dataset data = read_dataset(cfg.data_path);
  const int workers = flags.workers.value_or(default_workers());
  spdlog::info("fitting {} observations from {}", data.y.size(), cfg.data_path.string());
  FitOutcome out = run_fit(cfg, data, workers);
  if (cfg.output_path) {
    out.result["diagnostics"]["fitted_csv"] = sibling(*cfg.output_path, "_fitted.csv").string();
  }
  emit(cfg.output_path, out.result.dump(2) + "\n");
  if (cfg.output_path && !out.fitted_csv.empty()) {
    write_text(sibling(*cfg.output_path, "_fitted.csv"), out.fitted_csv);
  }
  if (out.exit_code != kExitOk) {
    spdlog::error("{}", out.result["diagnostics"].value("error", std::string("fit failed")));
  }
  return out.exit_code;
}

int cmd_simulate(const CommonFlags& flags) {
  SimulateConfig cfg = parse_simulate_config(load_json(flags.config));
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.output) cfg.output_path = *flags.output;
  const DesignSet design = its_design(cfg.its);
  RngStream rng(cfg.seed, 0);
  const Eigen::VectorXd y = markov_series(cfg.theta, design, cfg.family, rng);
  std::vector<double> t(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) t[static_cast<std::size_t>(i)] = i + 1;
  emit(cfg.output_path, series_csv(t, y));
  return kExitOk;
}

int cmd_mc_study(const CommonFlags& flags) {
  McConfig cfg = parse_mc_config(load_json(flags.config));
  if (flags.seed) cfg.base.seed = *flags.seed;
  if (flags.output) cfg.output_path = *flags.output;
  cfg.base.workers = flags.workers.value_or(default_workers());
  std::vector<McStudyReport> reports;
  json rep_json = json::array();
  for (int n : cfg.n_values) {
    spdlog::info("Monte Carlo cell n={} K={}", n, cfg.base.K);
    reports.push_back(run_mc_study(cfg.for_n(n)));
    rep_json.push_back(report_to_json(reports.back()));
  }
  const json doc = {{"config", mc_config_to_json(cfg)}, {"reports", rep_json}};
  emit(cfg.output_path, doc.dump(2) + "\n");
  if (cfg.output_path) write_text(sibling(*cfg.output_path, "_table.csv"), report_table_csv(reports));
  int converged = 0;
  for (const auto& r : reports) converged += r.converged;
  return converged > 0 ? kExitOk : kExitNumerical;
}

int cmd_validate(const CommonFlags& flags) {
  const std::filesystem::path path = flags.config;
  const json doc = load_json(path);
  switch (detect_kind(doc)) {
    case ConfigKind::fit: {
      const FitConfig cfg = parse_fit_config(doc, path.parent_path());
      const Dataset data = read_dataset(cfg.data_path);
      const int tau = cfg.tau ? *cfg.tau : cfg.candidates.front();
      for (int c : cfg.candidates.empty() ? std::vector<int>{tau} : cfg.candidates) {
        ItsConfig its{static_cast<int>(data.y.size()), c, cfg.t0.value_or(c), cfg.transform,
                      cfg.dispersion_change};
        validate_series(data.y, its_design(its, data.t, data.covariates, data.covariate_names));
      }
      std::cout << "valid fit config (" << data.y.size() << " observations)\n";
      break;
    }
    case ConfigKind::simulate:
      parse_simulate_config(doc);
      std::cout << "valid simulate config\n";
      break;
    case ConfigKind::mc_study:
      parse_mc_config(doc);
      std::cout << "valid mc-study config\n";
      break;
  }
  return kExitOk;
}

}  // namespace

FitOutcome run_fit(const FitConfig& cfg, const Dataset& data, int workers) {
  FitOutcome out;
  json& r = out.result;
  r = {{"estimates", nullptr},      {"std_errors", nullptr}, {"conf_intervals", nullptr},
       {"tests", nullptr},          {"copula", nullptr},     {"changepoint", nullptr},
       {"diagnostics", json::object()}};
  json& diag = r["diagnostics"];
  const auto n = static_cast<int>(data.y.size());
  diag["n"] = n;
  diag["n_zero"] = (data.y.array() == 0.0).count();
  diag["n_one"] = (data.y.array() == 1.0).count();
  diag["alpha"] = cfg.alpha;
  diag["seed"] = cfg.seed;
  diag["se_method"] = to_string(cfg.se_method);
  diag["warnings"] = json::array();
  diag["status"] = "ok";

  auto make_design = [&](int tau) {
    ItsConfig its{n, tau, cfg.t0.value_or(tau), cfg.transform, cfg.dispersion_change};
    return its_design(its, data.t, data.covariates, data.covariate_names);
  };

  // Input problems surface as exceptions before any numerical work.
  for (int tau : cfg.tau ? std::vector<int>{*cfg.tau} : cfg.candidates) {
    validate_series(data.y, make_design(tau));
  }

  auto numerical_failure = [&](const std::string& what) {
    diag["status"] = "numerical_failure";
    diag["error"] = what;
    out.exit_code = kExitNumerical;
    return out;
  };

  int tau = cfg.tau.value_or(0);
  json cp = {{"t0", cfg.t0 ? json(*cfg.t0) : json(nullptr)}, {"selected", !cfg.tau.has_value()}};
  if (!cfg.tau) {
    try {
      const ChangePointSelection sel =
          select_changepoint(make_design, data.y, cfg.candidates, cfg.hac, {}, workers);
      tau = sel.selected_tau;
      json cands = json::array();
      for (const auto& d : sel.details) {
        json c = {{"tau", d.tau}, {"ok", d.ok}};
        c["cbic"] = d.ok ? json(d.cbic) : json(nullptr);
        c["loglik"] = d.ok ? json(d.loglik) : json(nullptr);
        c["penalty"] = d.ok ? json(d.penalty) : json(nullptr);
        if (!d.ok) c["error"] = d.error;
        cands.push_back(c);
      }
      cp["candidates"] = cands;
    } catch (const NumericalError& e) {
      r["changepoint"] = cp;
      return numerical_failure(e.what());
    }
  } else {
    cp["candidates"] = json::array();
  }
  cp["tau"] = tau;
  if (!cfg.t0) cp["t0"] = tau;
  r["changepoint"] = cp;

  const DesignSet design = make_design(tau);
  const std::vector<std::string> names = parameter_names(design);
  diag["parameters"] = parameter_table(design);

  StageOneFit fit1;
  try {
    fit1 = fit_stage1(design, data.y);
  } catch (const NumericalError& e) {
    return numerical_failure(e.what());
  }
  const Eigen::VectorXd est = fit1.theta_hat.flatten();
  r["estimates"] = named(names, est);
  diag["converged"] = fit1.converged;
  diag["iterations"] = fit1.iterations;
  diag["loglik"] = fit1.loglik;
  diag["score_max_abs"] = fit1.score_at_opt.lpNorm<Eigen::Infinity>();
  if (!fit1.converged) return numerical_failure("stage-1 composite likelihood fit did not converge");

  {
    const PerTimeParams ptp = per_time_params(fit1.theta_hat, design);
    std::ostringstream os;
    os.precision(17);
    os << "t,y,v_t\n";
    for (int i = 0; i < n; ++i) {
      os << data.t[static_cast<std::size_t>(i)] << ',' << data.y(i) << ','
         << ptp.marginal_mean[static_cast<std::size_t>(i)] << '\n';
    }
    out.fitted_csv = os.str();
  }

  try {
    const StageTwoFit fit2 = fit_stage2_copula(cfg.family, fit1.theta_hat, design, data.y);
    r["copula"] = {{"family", to_string(fit2.family)},
                   {"rho", fit2.rho_hat},
                   {"pseudo_loglik", fit2.pseudo_loglik},
                   {"flat", fit2.flat}};
    if (fit2.flat) diag["warnings"].push_back("copula pseudo-likelihood is flat in rho");

    CovarianceEstimate cov;
    if (cfg.se_method == SeMethod::hac) {
      cov = hac_covariance(fit1, design, data.y, cfg.hac);
      diag["max_lag"] = cov.max_lag;
    } else {
      BootstrapConfig bc;
      bc.replicates = cfg.R;
      bc.seed = cfg.seed;
      bc.workers = workers;
      cov = bootstrap_se(fit1, fit2, design, bc);
      diag["bootstrap"] = {{"replicates", cfg.R},
                           {"used", cov.replicates_used},
                           {"failed", cov.replicates_failed}};
    }
    for (const auto& w : cov.warnings) diag["warnings"].push_back(w);
    const Eigen::VectorXd se = cov.std_errors();
    r["std_errors"] = named(names, se);

    const std::vector<Interval> ci = confidence_intervals(est, se, cfg.alpha);
    json cis = json::object();
    for (std::size_t i = 0; i < names.size(); ++i) {
      cis[names[i]] = {{"lower", ci[i].lower}, {"upper", ci[i].upper}};
    }
    r["conf_intervals"] = cis;
    diag["confidence_level"] = 1.0 - cfg.alpha;
    diag["z"] = numkit::normal_quantile(1.0 - cfg.alpha / 2.0);

    json tests = json::object();
    for (ItsHypothesis h :
         {ItsHypothesis::level, ItsHypothesis::trend, ItsHypothesis::level_and_trend}) {
      tests[to_string(h)] = wald_json(wald_test(est, cov.cov, its_constraint(design, h), cfg.alpha));
    }
    json coef = json::object();
    for (Eigen::Index j = 0; j < est.size(); ++j) {
      if (!(se(j) > 0.0)) {
        coef[names[static_cast<std::size_t>(j)]] = nullptr;
        continue;
      }
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(1, est.size());
      a(0, j) = 1.0;
      coef[names[static_cast<std::size_t>(j)]] = wald_json(wald_test(est, cov.cov, a, cfg.alpha));
    }
    tests["coefficients"] = coef;
    r["tests"] = tests;
  } catch (const NumericalError& e) {
    return numerical_failure(e.what());
  }
  return out;
}

json report_to_json(const McStudyReport& rep) {
  json coefs = json::array();
  for (const auto& c : rep.coefficients) {
    coefs.push_back({{"name", c.name},
                     {"truth", c.truth},
                     {"mean", c.mean},
                     {"bias", c.bias},
                     {"sd", c.sd},
                     {"mean_se", c.mean_se},
                     {"coverage", c.coverage},
                     {"power", c.power}});
  }
  return {{"n", rep.n},
          {"K", rep.K},
          {"converged", rep.converged},
          {"failed", rep.failed},
          {"coefficients", coefs},
          {"level_test_rate", rep.level_test_rate},
          {"trend_test_rate", rep.trend_test_rate},
          {"joint_test_rate", rep.joint_test_rate},
          {"tau_selected_rate", rep.tau_selected_rate},
          {"mean_rho_hat", rep.mean_rho_hat},
          {"wall_seconds", rep.wall_seconds}};
}

std::string report_table_csv(const std::vector<McStudyReport>& reports) {
  std::ostringstream os;
  os.precision(6);
  os << "metric,coefficient";
  for (const auto& r : reports) os << ",n=" << r.n;
  os << '\n';
  if (reports.empty()) return os.str();
  struct Metric {
    const char* name;
    double CoefficientSummary::*field;
  };
  const Metric metrics[] = {{"bias", &CoefficientSummary::bias},
                            {"se", &CoefficientSummary::sd},
                            {"mean_se", &CoefficientSummary::mean_se},
                            {"coverage", &CoefficientSummary::coverage},
                            {"power", &CoefficientSummary::power}};
  for (const auto& m : metrics) {
    for (std::size_t j = 0; j < reports.front().coefficients.size(); ++j) {
      os << m.name << ',' << reports.front().coefficients[j].name;
      for (const auto& r : reports) os << ',' << r.coefficients[j].*m.field;
      os << '\n';
    }
  }
  const std::pair<const char*, double McStudyReport::*> rates[] = {
      {"level_change", &McStudyReport::level_test_rate},
      {"trend_change", &McStudyReport::trend_test_rate},
      {"level_and_trend_change", &McStudyReport::joint_test_rate}};
  for (const auto& [name, field] : rates) {
    os << "rejection_rate," << name;
    for (const auto& r : reports) os << ',' << r.*field;
    os << '\n';
  }
  os << "converged,all";
  for (const auto& r : reports) os << ',' << r.converged;
  os << '\n';
  return os.str();
}

int run(int argc, char** argv) {
  CLI::App app{"Marginalized zero-one-inflated Beta time series: fit, simulate, Monte Carlo"};
  app.require_subcommand(1);
  CommonFlags flags;
  CLI::App* fit = app.add_subcommand("fit", "fit a series and run the ITS tests");
  CLI::App* sim = app.add_subcommand("simulate", "simulate a series from given coefficients");
  CLI::App* mc = app.add_subcommand("mc-study", "run a Monte Carlo study");
  CLI::App* val = app.add_subcommand("validate-config", "check a configuration file");
  for (CLI::App* c : {fit, sim, mc, val}) add_common(c, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    setup_logging();
    if (*fit) return cmd_fit(flags);
    if (*sim) return cmd_simulate(flags);
    if (*mc) return cmd_mc_study(flags);
    return cmd_validate(flags);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace mzoib::cli
