#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mzoib/cli.hpp"
#include "mzoib/errors.hpp"

namespace mzoib::cli {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw ConfigError("config: '" + key + "' " + what);
}

void allow_keys(const json& obj, const std::string& where, std::set<std::string> keys) {
  if (!obj.is_object()) bad(where.empty() ? "<root>" : where, "must be an object");
  for (const auto& [k, v] : obj.items()) {
    if (!keys.count(k)) {
      throw ConfigError("config: unknown key '" + (where.empty() ? k : where + "." + k) + "'");
    }
  }
}

const json* find(const json& obj, const std::string& key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

int as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) bad(key, "must be an integer");
  return v.get<int>();
}

double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) bad(key, "must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) bad(key, "must be finite");
  return d;
}

bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) bad(key, "must be true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) bad(key, "must be a string");
  return v.get<std::string>();
}

std::uint64_t as_seed(const json& v, const std::string& key) {
  if (!v.is_number_unsigned()) bad(key, "must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::vector<int> as_int_list(const json& v, const std::string& key) {
  if (!v.is_array() || v.empty()) bad(key, "must be a non-empty array of integers");
  std::vector<int> out;
  for (const auto& e : v) out.push_back(as_int(e, key));
  return out;
}

Eigen::VectorXd as_vector(const json& v, const std::string& key) {
  if (!v.is_array() || v.empty()) bad(key, "must be a non-empty array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = as_double(v[i], key);
  return out;
}

void parse_se(const json& se, SeMethod& method, int& R, HacConfig& hac) {
  allow_keys(se, "se", {"method", "R", "max_lag"});
  if (const json* m = find(se, "method")) {
    try {
      method = parse_se_method(as_string(*m, "se.method"));
    } catch (const ConfigError& e) {
      bad("se.method", e.what());
    }
  }
  if (const json* r = find(se, "R")) {
    R = as_int(*r, "se.R");
    if (R < 2) bad("se.R", "must be at least 2");
  }
  if (const json* l = find(se, "max_lag")) {
    if (l->is_string() && l->get<std::string>() == "auto") {
      hac.max_lag.reset();
    } else {
      hac.max_lag = as_int(*l, "se.max_lag");
      if (*hac.max_lag < 0) bad("se.max_lag", "must be non-negative or \"auto\"");
    }
  }
}

CopulaKind parse_family(const json& v, const std::string& key) {
  try {
    return parse_copula_kind(as_string(v, key));
  } catch (const ConfigError& e) {
    bad(key, e.what());
  }
}

TimeTransform parse_time_transform(const json& v) {
  try {
    return parse_transform(as_string(v, "its.transform"));
  } catch (const ConfigError& e) {
    bad("its.transform", e.what());
  }
}

double parse_alpha(const json& doc) {
  double alpha = 0.05;
  if (const json* a = find(doc, "alpha")) alpha = as_double(*a, "alpha");
  if (!(alpha > 0.0 && alpha < 1.0)) bad("alpha", "must lie in (0, 1)");
  return alpha;
}

}  // namespace

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ConfigKind detect_kind(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  if (doc.contains("K")) return ConfigKind::mc_study;
  if (doc.contains("data_path")) return ConfigKind::fit;
  if (doc.contains("theta")) return ConfigKind::simulate;
  throw ConfigError(
      "config: cannot tell the command (expected 'data_path' for fit, 'theta' for simulate or "
      "'K' for mc-study)");
}

json theta_to_json(const Theta& theta) {
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  return {{"beta1", vec(theta.beta1)},
          {"beta2", vec(theta.beta2)},
          {"beta3", vec(theta.beta3)},
          {"beta4", vec(theta.beta4)}};
}

Theta theta_from_json(const json& j) {
  allow_keys(j, "theta", {"beta1", "beta2", "beta3", "beta4"});
  Theta th;
  for (const char* k : {"beta1", "beta2", "beta3", "beta4"}) {
    if (!j.contains(k)) bad(std::string("theta.") + k, "is required");
  }
  th.beta1 = as_vector(j.at("beta1"), "theta.beta1");
  th.beta2 = as_vector(j.at("beta2"), "theta.beta2");
  th.beta3 = as_vector(j.at("beta3"), "theta.beta3");
  th.beta4 = as_vector(j.at("beta4"), "theta.beta4");
  return th;
}

FitConfig parse_fit_config(const json& doc, const std::filesystem::path& base_dir) {
  allow_keys(doc, "", {"data_path", "its", "copula", "se", "alpha", "seed", "output_path"});
  FitConfig cfg;
  const json* dp = find(doc, "data_path");
  if (!dp) bad("data_path", "is required");
  cfg.data_path = as_string(*dp, "data_path");
  if (cfg.data_path.is_relative() && !base_dir.empty()) cfg.data_path = base_dir / cfg.data_path;

  const json* its = find(doc, "its");
  if (!its) bad("its", "is required");
  allow_keys(*its, "its", {"tau", "candidates", "t0", "transform", "dispersion_change"});
  const json* tau = find(*its, "tau");
  const json* cands = find(*its, "candidates");
  if ((tau != nullptr) == (cands != nullptr)) {
    throw ConfigError("config: exactly one of 'its.tau' and 'its.candidates' must be given");
  }
  if (tau) cfg.tau = as_int(*tau, "its.tau");
  if (cands) cfg.candidates = as_int_list(*cands, "its.candidates");
  if (const json* t0 = find(*its, "t0")) cfg.t0 = as_double(*t0, "its.t0");
  if (const json* tr = find(*its, "transform")) cfg.transform = parse_time_transform(*tr);
  if (const json* dc = find(*its, "dispersion_change")) {
    cfg.dispersion_change = as_bool(*dc, "its.dispersion_change");
  }

  if (const json* cop = find(doc, "copula")) {
    allow_keys(*cop, "copula", {"family"});
    if (const json* f = find(*cop, "family")) cfg.family = parse_family(*f, "copula.family");
  }
  if (const json* se = find(doc, "se")) parse_se(*se, cfg.se_method, cfg.R, cfg.hac);
  cfg.alpha = parse_alpha(doc);
  if (const json* s = find(doc, "seed")) cfg.seed = as_seed(*s, "seed");
  if (const json* o = find(doc, "output_path")) cfg.output_path = as_string(*o, "output_path");
  return cfg;
}

SimulateConfig parse_simulate_config(const json& doc) {
  allow_keys(doc, "", {"n", "its", "theta", "copula", "seed", "output_path"});
  SimulateConfig cfg;
  const json* n = find(doc, "n");
  if (!n) bad("n", "is required");
  cfg.n = as_int(*n, "n");
  if (cfg.n < 3) bad("n", "must be at least 3");
  cfg.its.n = cfg.n;
  cfg.its.tau = cfg.n / 2 + 1;
  if (const json* its = find(doc, "its")) {
    allow_keys(*its, "its", {"tau", "t0", "transform", "dispersion_change"});
    if (const json* tau = find(*its, "tau")) cfg.its.tau = as_int(*tau, "its.tau");
    if (const json* t0 = find(*its, "t0")) cfg.its.t0 = as_double(*t0, "its.t0");
    if (const json* tr = find(*its, "transform")) cfg.its.transform = parse_time_transform(*tr);
    if (const json* dc = find(*its, "dispersion_change")) {
      cfg.its.dispersion_change = as_bool(*dc, "its.dispersion_change");
    }
  }
  const json* th = find(doc, "theta");
  if (!th) bad("theta", "is required");
  cfg.theta = theta_from_json(*th);
  const json* cop = find(doc, "copula");
  if (!cop) bad("copula", "is required");
  allow_keys(*cop, "copula", {"family", "rho"});
  if (const json* f = find(*cop, "family")) cfg.family.kind = parse_family(*f, "copula.family");
  const json* rho = find(*cop, "rho");
  if (!rho) bad("copula.rho", "is required");
  cfg.family.rho = as_double(*rho, "copula.rho");
  try {
    cfg.family.validate();
  } catch (const DomainError& e) {
    bad("copula.rho", e.what());
  }
  if (const json* s = find(doc, "seed")) cfg.seed = as_seed(*s, "seed");
  if (const json* o = find(doc, "output_path")) cfg.output_path = as_string(*o, "output_path");
  cfg.its.validate();
  check_shapes(cfg.theta, its_design(cfg.its));
  return cfg;
}

McStudyConfig McConfig::for_n(int n) const {
  McStudyConfig c = base;
  c.n = n;
  c.its.n = n;
  c.its.tau = tau ? *tau : n / 2 + 1;
  c.candidates.clear();
  for (int off : candidate_offsets) c.candidates.push_back(c.its.tau + off);
  return c;
}

McConfig parse_mc_config(const json& doc) {
  allow_keys(doc, "", {"n", "K", "theta", "copula", "fit_family", "its", "se", "select_tau",
                       "candidate_offsets", "alpha", "seed", "output_path"});
  McConfig cfg;
  McStudyConfig& b = cfg.base;
  const json* n = find(doc, "n");
  if (!n) bad("n", "is required");
  if (n->is_array()) {
    cfg.n_values = as_int_list(*n, "n");
  } else {
    cfg.n_values = {as_int(*n, "n")};
  }
  const json* k = find(doc, "K");
  if (!k) bad("K", "is required");
  b.K = as_int(*k, "K");
  if (b.K < 1) bad("K", "must be at least 1");
  const json* th = find(doc, "theta");
  if (!th) bad("theta", "is required");
  b.theta_true = theta_from_json(*th);
  const json* cop = find(doc, "copula");
  if (!cop) bad("copula", "is required");
  allow_keys(*cop, "copula", {"family", "rho"});
  if (const json* f = find(*cop, "family")) b.family.kind = parse_family(*f, "copula.family");
  const json* rho = find(*cop, "rho");
  if (!rho) bad("copula.rho", "is required");
  b.family.rho = as_double(*rho, "copula.rho");
  try {
    b.family.validate();
  } catch (const DomainError& e) {
    bad("copula.rho", e.what());
  }
  b.fit_family = b.family.kind;
  if (const json* ff = find(doc, "fit_family")) b.fit_family = parse_family(*ff, "fit_family");
  if (const json* its = find(doc, "its")) {
    allow_keys(*its, "its", {"tau", "t0", "transform", "dispersion_change"});
    if (const json* tau = find(*its, "tau")) {
      if (!(tau->is_string() && tau->get<std::string>() == "auto")) {
        cfg.tau = as_int(*tau, "its.tau");
      }
    }
    if (const json* t0 = find(*its, "t0")) b.its.t0 = as_double(*t0, "its.t0");
    if (const json* tr = find(*its, "transform")) b.its.transform = parse_time_transform(*tr);
    if (const json* dc = find(*its, "dispersion_change")) {
      b.its.dispersion_change = as_bool(*dc, "its.dispersion_change");
    }
  }
  if (const json* se = find(doc, "se")) parse_se(*se, b.se_method, b.R, b.hac);
  if (const json* st = find(doc, "select_tau")) b.select_tau = as_bool(*st, "select_tau");
  if (const json* co = find(doc, "candidate_offsets")) {
    cfg.candidate_offsets = as_int_list(*co, "candidate_offsets");
  }
  if (b.select_tau && cfg.candidate_offsets.empty()) {
    cfg.candidate_offsets = {-2, -1, 0, 1, 2};
  }
  b.alpha = parse_alpha(doc);
  if (const json* s = find(doc, "seed")) b.seed = as_seed(*s, "seed");
  if (const json* o = find(doc, "output_path")) cfg.output_path = as_string(*o, "output_path");
  for (int nv : cfg.n_values) {
    const McStudyConfig c = cfg.for_n(nv);
    c.validate();
    check_shapes(c.theta_true, its_design(c.its));
  }
  return cfg;
}

json mc_config_to_json(const McConfig& cfg) {
  const McStudyConfig& b = cfg.base;
  json its = {{"tau", cfg.tau ? json(*cfg.tau) : json("auto")},
              {"t0", b.its.t0},
              {"transform", to_string(b.its.transform)},
              {"dispersion_change", b.its.dispersion_change}};
  json se = {{"method", to_string(b.se_method)}, {"R", b.R}};
  se["max_lag"] = b.hac.max_lag ? json(*b.hac.max_lag) : json("auto");
  json out = {{"n", cfg.n_values},
              {"K", b.K},
              {"theta", theta_to_json(b.theta_true)},
              {"copula", {{"family", to_string(b.family.kind)}, {"rho", b.family.rho}}},
              {"fit_family", to_string(b.fit_family)},
              {"its", its},
              {"se", se},
              {"select_tau", b.select_tau},
              {"candidate_offsets", cfg.candidate_offsets},
              {"alpha", b.alpha},
              {"seed", b.seed}};
  if (cfg.output_path) out["output_path"] = cfg.output_path->string();
  return out;
}

}  // namespace mzoib::cli
