#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bms {

/// Regression data: N rows of K independent variables plus a target.
/// Stored column-major so the evaluator can sweep one variable at a time.
struct Dataset {
  std::vector<std::string> names;             // x_1..x_K column names
  std::string target_name = "y";
  std::vector<std::vector<double>> columns;   // K columns of N values
  std::vector<double> y;

  std::size_t n_rows() const { return y.size(); }
  std::size_t n_vars() const { return columns.size(); }

  void check() const {
    if (y.empty()) throw std::invalid_argument("dataset has no rows");
    if (columns.empty()) throw std::invalid_argument("dataset has no input columns");
    for (const auto& c : columns)
      if (c.size() != y.size()) throw std::invalid_argument("ragged dataset columns");
    for (const auto& c : columns)
      for (double v : c)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite input value");
    for (double v : y)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite target value");
  }

  std::vector<double> row(std::size_t i) const {
    std::vector<double> r(columns.size());
    for (std::size_t k = 0; k < columns.size(); ++k) r[k] = columns[k][i];
    return r;
  }

  double target_mean() const {
    double s = 0;
    for (double v : y) s += v;
    return s / static_cast<double>(y.size());
  }

  double target_variance() const {
    const double m = target_mean();
    double s = 0;
    for (double v : y) s += (v - m) * (v - m);
    return s / static_cast<double>(y.size());
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r\""));
    const auto last = cell.find_last_not_of(" \t\r\"");
    cell.erase(last == std::string::npos ? 0 : last + 1);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_double(std::string_view s, double& v) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

/// Parses CSV with a header row. `target` names the y column (empty: last
/// column); every other numeric column becomes an input in header order.
/// Non-numeric columns are ignored.
inline Dataset read_csv(std::istream& in, const std::string& target = {}) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("CSV is empty");
  const auto header = detail::split_csv_line(line);
  std::vector<std::vector<std::string>> cells;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto row = detail::split_csv_line(line);
    if (row.size() != header.size())
      throw std::runtime_error("CSV row " + std::to_string(cells.size() + 2) + " has " +
                               std::to_string(row.size()) + " fields, header has " +
                               std::to_string(header.size()));
    cells.push_back(std::move(row));
  }
  std::size_t target_col = header.size() - 1;
  if (!target.empty()) {
    target_col = header.size();
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == target) target_col = j;
    if (target_col == header.size()) throw std::runtime_error("target column '" + target + "' not found");
  }
  Dataset d;
  d.target_name = header[target_col];
  for (std::size_t j = 0; j < header.size(); ++j) {
    std::vector<double> col;
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size() && numeric; ++i) {
      double v = 0;
      numeric = detail::parse_double(cells[i][j], v);
      col.push_back(v);
    }
    if (j == target_col) {
      if (!numeric) throw std::runtime_error("target column is not numeric");
      d.y = std::move(col);
    } else if (numeric) {
      d.names.push_back(header[j]);
      d.columns.push_back(std::move(col));
    }
  }
  d.check();
  return d;
}

inline Dataset read_csv_file(const std::string& path, const std::string& target = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv(in, target);
}

/// Reads inputs only (no target), e.g. a prediction grid.
inline std::vector<std::vector<double>> read_input_rows(std::istream& in, std::vector<std::string>* names) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("CSV is empty");
  const auto header = detail::split_csv_line(line);
  if (names) *names = header;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) throw std::runtime_error("ragged CSV row");
    std::vector<double> r(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j)
      if (!detail::parse_double(cells[j], r[j])) throw std::runtime_error("non-numeric value '" + cells[j] + "'");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_csv(std::ostream& out, const Dataset& d) {
  out << std::setprecision(17);
  for (const auto& n : d.names) out << n << ',';
  out << d.target_name << '\n';
  for (std::size_t i = 0; i < d.n_rows(); ++i) {
    for (const auto& c : d.columns) out << c[i] << ',';
    out << d.y[i] << '\n';
  }
}

}  // namespace bms
