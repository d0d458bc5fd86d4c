#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "mzoib/copula.hpp"
#include "mzoib/infer.hpp"
#include "mzoib/model.hpp"
#include "mzoib/simulate.hpp"

namespace mzoib::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

struct Dataset {
  std::vector<double> t;
  Eigen::VectorXd y;
  Eigen::MatrixXd covariates;  // n x k, k may be 0
  std::vector<std::string> covariate_names;
};

// CSV with a header row: required column y, optional t, any other columns are
// covariates. Throws ConfigError citing the file line and data row.
Dataset read_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& text, const std::string& source = "<input>");

struct FitConfig {
  std::filesystem::path data_path;
  std::optional<int> tau;
  std::vector<int> candidates;
  std::optional<double> t0;
  TimeTransform transform = TimeTransform::identity;
  bool dispersion_change = true;
  CopulaKind family = CopulaKind::gaussian;
  SeMethod se_method = SeMethod::bootstrap;
  int R = 500;
  HacConfig hac;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> output_path;
};

struct SimulateConfig {
  int n = 0;
  ItsConfig its;
  Theta theta;
  CopulaFamily family;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> output_path;
};

struct McConfig {
  std::vector<int> n_values;
  std::optional<int> tau;            // empty: floor(n/2) + 1
  std::vector<int> candidate_offsets;  // relative to tau
  McStudyConfig base;                // n, its.n and its.tau filled per n
  std::optional<std::filesystem::path> output_path;

  McStudyConfig for_n(int n) const;
};

enum class ConfigKind { fit, simulate, mc_study };
ConfigKind detect_kind(const nlohmann::json& doc);

// Paths inside the document are resolved against base_dir.
FitConfig parse_fit_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
SimulateConfig parse_simulate_config(const nlohmann::json& doc);
McConfig parse_mc_config(const nlohmann::json& doc);

nlohmann::json theta_to_json(const Theta& theta);
Theta theta_from_json(const nlohmann::json& j);
nlohmann::json mc_config_to_json(const McConfig& cfg);

nlohmann::json load_json(const std::filesystem::path& path);

struct FitOutcome {
  nlohmann::json result;
  std::string fitted_csv;  // t,y,v_t
  int exit_code = kExitOk;
};

// Full analysis of one series; never throws for numerical failures (the
// outcome carries exit code 3 and partial diagnostics).
FitOutcome run_fit(const FitConfig& cfg, const Dataset& data, int workers);

std::string series_csv(const std::vector<double>& t, const Eigen::VectorXd& y);

nlohmann::json report_to_json(const McStudyReport& rep);
std::string report_table_csv(const std::vector<McStudyReport>& reports);

// Entry point of the mzoibts executable.
int run(int argc, char** argv);

}  // namespace mzoib::cli
