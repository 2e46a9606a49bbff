#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wmlff {

// Column-major table of raw text cells. An empty cell is a null.
struct Table {
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> columns;

  std::size_t row_count() const { return columns.empty() ? 0 : columns.front().size(); }
  std::size_t column_count() const { return names.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  const std::vector<std::string>& column(std::string_view name) const;
  void add_column(std::string name, std::vector<std::string> values);
};

inline bool is_null(std::string_view cell) { return cell.empty(); }

// delimiter '\0' means: tab if the header line contains one, else comma.
Table read_delimited(const std::filesystem::path& path, char delimiter = '\0');
Table parse_delimited(std::string_view text, char delimiter = '\0');
void write_delimited(const std::filesystem::path& path, const Table& table, char delimiter = ',');

// Strict number parsing; throws DataError mentioning the context on failure.
double parse_number(std::string_view cell, std::string_view context);

}  // namespace wmlff
