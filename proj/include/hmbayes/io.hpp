#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace hmb {

/// Numeric CSV table with a single header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t columns() const { return header.size(); }
  // Index of a named column; throws DataError when absent.
  std::size_t column(const std::string& name) const;
};

// Values are written with 17 significant digits so they read back exactly.
std::string format_number(double v);

void write_csv(const std::filesystem::path& path, const CsvTable& table);

// Throws ConfigError when the file cannot be opened and DataError when a row
// has the wrong width or a cell is not a number.
CsvTable read_csv(const std::filesystem::path& path);

// Square or rectangular matrix without a header naming rows: columns c0..c{n-1}.
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                      const std::string& prefix = "c");
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
// Throws ConfigError when missing, DataError when malformed.
nlohmann::json read_json(const std::filesystem::path& path);

} // namespace hmb
