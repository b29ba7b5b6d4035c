#include "hmbayes/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hmbayes/error.hpp"

namespace hmb {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    cells.emplace_back();
  }
  return cells;
}

double parse_number(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
  std::size_t b = cell.find_first_not_of(" \t");
  std::size_t e = cell.find_last_not_of(" \t\r");
  double v = 0.0;
  if (b != std::string::npos) {
    const char* first = cell.data() + b;
    const char* last = cell.data() + e + 1;
    if (*first == '+') {
      ++first;
    }
    const auto res = std::from_chars(first, last, v);
    if (res.ec == std::errc() && res.ptr == last) {
      return v;
    }
  }
  throw DataError(path.string() + ":" + std::to_string(line) + ": '" + cell + "' is not a number");
}

} // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) {
      return i;
    }
  }
  throw DataError("missing CSV column '" + name + "'");
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    out << (i ? "," : "") << table.header[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << format_number(row[i]);
    }
    out << '\n';
  }
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open " + path.string());
  }
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw DataError(path.string() + " is empty");
  }
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  table.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") {
      continue;
    }
    const auto cells = split(line);
    if (cells.size() != table.header.size()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(table.header.size()) + " columns, found " +
                      std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      row.push_back(parse_number(c, path, lineno));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::string& prefix) {
  CsvTable t;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    t.header.push_back(prefix + std::to_string(j));
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    t.rows.emplace_back(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      t.rows.back()[static_cast<std::size_t>(j)] = m(i, j);
    }
  }
  write_csv(path, t);
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.columns()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.columns(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.rows[i][j];
    }
  }
  return m;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw ConfigError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open " + path.string());
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

} // namespace hmb
