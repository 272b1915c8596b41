#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "egqn/common/binary_io.hpp"

namespace egqn::harness {

class CsvParseError : public FormatError {
 public:
  CsvParseError(const std::string& source, std::size_t line, const std::string& message)
      : FormatError(source + ":" + std::to_string(line) + ": " + message), line(line) {}
  std::size_t line;
};

struct MetricsTable {
  std::vector<std::string> columns;       // first column is the step
  std::vector<std::vector<double>> rows;  // every row has columns.size() values
};

// Header line then numeric rows. An empty input yields the training columns
// with no rows.
MetricsTable parse_metrics_csv(std::istream& in, const std::string& source = "<csv>");
MetricsTable read_metrics_csv(const std::filesystem::path& path);

struct Chart {
  std::string metric;
  std::vector<double> steps;
  std::vector<double> values;
  double x_min = 0.0, x_max = 0.0;  // exactly the step range of the data
  double y_min = 0.0, y_max = 0.0;  // data range, widened to include the floor
  std::optional<double> floor;

  std::string svg() const;
};

// Columns bounded below by the ELBO floor get the floor rule.
bool has_floor_rule(const std::string& metric);

Chart make_chart(const MetricsTable& table, std::size_t column, std::optional<double> floor);

// One <metric>.svg per non-step column plus summary.csv (metric, count,
// first, last, min, max). Returns the files written.
std::vector<std::filesystem::path> export_plots(const std::filesystem::path& metrics_csv,
                                                const std::filesystem::path& out_dir, double output_std = 1.4);

}  // namespace egqn::harness
