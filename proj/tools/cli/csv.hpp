#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dpmqte/stat/linalg.hpp"

namespace dpmqte::cli {

/// Numeric table read from a CSV file with a header row.
struct Table {
  std::vector<std::string> names;
  Matrix values;

  /// Column position or -1.
  int find(const std::string& name) const;
  Matrix columns(const std::vector<int>& idx) const;
};

/// Comma separated, header required, '.' decimal, optional double quotes.
/// Empty cells, NA and non-numeric values are rejected with row/column context.
Table read_csv(const std::filesystem::path& path);

}  // namespace dpmqte::cli
