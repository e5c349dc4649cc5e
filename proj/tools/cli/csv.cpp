#include "csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "dpmqte/error.hpp"

namespace dpmqte::cli {

namespace {

std::vector<std::string> split_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  if (quoted) throw InvalidArgument("line " + std::to_string(lineno) + ": unterminated quote");
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

int Table::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

Matrix Table::columns(const std::vector<int>& idx) const {
  Matrix m(values.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = values.col(idx[j]);
  return m;
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  const std::string where = path.string() + ": ";
  std::string line;
  std::size_t lineno = 0;
  Table t;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!line.empty()) break;
  }
  if (line.empty()) throw InvalidArgument(where + "empty file (a header row is required)");
  for (auto& c : split_line(line, lineno)) t.names.push_back(trim(c));
  for (std::size_t j = 0; j < t.names.size(); ++j) {
    if (t.names[j].empty()) throw InvalidArgument(where + "header column " + std::to_string(j + 1) + " is empty");
    for (std::size_t i = 0; i < j; ++i)
      if (t.names[i] == t.names[j]) throw InvalidArgument(where + "duplicate column '" + t.names[j] + "'");
  }

  std::vector<double> cells;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto parts = split_line(line, lineno);
    if (parts.size() != t.names.size())
      throw InvalidArgument(where + "line " + std::to_string(lineno) + " has " + std::to_string(parts.size()) +
                            " fields, header has " + std::to_string(t.names.size()));
    for (std::size_t j = 0; j < parts.size(); ++j) {
      const auto s = trim(parts[j]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw InvalidArgument(where + "line " + std::to_string(lineno) + ", column '" + t.names[j] +
                              "': " + (s.empty() ? std::string("missing value") : "not a finite number '" + s + "'"));
      cells.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw InvalidArgument(where + "no data rows");
  const auto cols = static_cast<Eigen::Index>(t.names.size());
  t.values.resize(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (Eigen::Index j = 0; j < cols; ++j)
      t.values(static_cast<Eigen::Index>(r), j) = cells[r * static_cast<std::size_t>(cols) + static_cast<std::size_t>(j)];
  return t;
}

}  // namespace dpmqte::cli
