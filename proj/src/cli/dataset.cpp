#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mzoib/cli.hpp"
#include "mzoib/errors.hpp"

namespace mzoib::cli {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(const std::string& source, std::size_t line, std::size_t row,
                       const std::string& what) {
  std::ostringstream os;
  os << source << ": line " << line;
  if (row > 0) os << " (data row " << row << ")";
  os << ": " << what;
  throw ConfigError(os.str());
}

double parse_number(const std::string& cell, const std::string& source, std::size_t line,
                    std::size_t row, const std::string& column) {
  const std::string s = trim(cell);
  if (s.empty()) fail(source, line, row, "missing value in column '" + column + "'");
  double v = 0.0;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail(source, line, row, "column '" + column + "' value '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

Dataset parse_dataset(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    header = split(line);
    break;
  }
  if (header.empty()) fail(source, line_no, 0, "missing header row");
  int y_col = -1, t_col = -1;
  std::vector<int> cov_cols;
  Dataset data;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string name = trim(header[j]);
    if (name.empty()) fail(source, line_no, 0, "empty column name in header");
    const int idx = static_cast<int>(j);
    if (name == "y") {
      if (y_col >= 0) fail(source, line_no, 0, "duplicate column 'y'");
      y_col = idx;
    } else if (name == "t") {
      if (t_col >= 0) fail(source, line_no, 0, "duplicate column 't'");
      t_col = idx;
    } else {
      cov_cols.push_back(idx);
      data.covariate_names.push_back(name);
    }
  }
  if (y_col < 0) fail(source, line_no, 0, "header has no 'y' column");

  std::vector<double> ys;
  std::vector<std::vector<double>> cov;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << "expected " << header.size() << " fields, found " << cells.size();
      fail(source, line_no, row, os.str());
    }
    const double y = parse_number(cells[static_cast<std::size_t>(y_col)], source, line_no, row, "y");
    if (!(y >= 0.0 && y <= 1.0)) {
      std::ostringstream os;
      os << "y=" << trim(cells[static_cast<std::size_t>(y_col)]) << " is outside [0, 1]";
      fail(source, line_no, row, os.str());
    }
    ys.push_back(y);
    if (t_col >= 0) {
      const double t =
          parse_number(cells[static_cast<std::size_t>(t_col)], source, line_no, row, "t");
      if (!data.t.empty() && !(t > data.t.back())) {
        fail(source, line_no, row, "t must be strictly increasing");
      }
      data.t.push_back(t);
    }
    std::vector<double> c;
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      c.push_back(parse_number(cells[static_cast<std::size_t>(cov_cols[k])], source, line_no, row,
                               data.covariate_names[k]));
    }
    cov.push_back(std::move(c));
  }
  if (ys.empty()) fail(source, line_no, 0, "no data rows");
  const auto n = static_cast<Eigen::Index>(ys.size());
  data.y = Eigen::Map<const Eigen::VectorXd>(ys.data(), n);
  if (data.t.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) data.t.push_back(static_cast<double>(i + 1));
  }
  data.covariates.resize(n, static_cast<Eigen::Index>(cov_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      data.covariates(i, static_cast<Eigen::Index>(k)) = cov[static_cast<std::size_t>(i)][k];
    }
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open data file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), path.string());
}

std::string series_csv(const std::vector<double>& t, const Eigen::VectorXd& y) {
  std::ostringstream os;
  os.precision(17);
  os << "t,y\n";
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    os << t[static_cast<std::size_t>(i)] << ',' << y(i) << '\n';
  }
  return os.str();
}

}  // namespace mzoib::cli
