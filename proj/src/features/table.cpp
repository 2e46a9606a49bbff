#include "wmlff/features/table.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "wmlff/errors.hpp"

namespace wmlff {

namespace {

std::vector<std::string> split_line(std::string_view line, char delim, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"' && cell.empty()) {
      quoted = true;
    } else if (c == delim) {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  if (quoted) throw DataError("line " + std::to_string(line_no) + ": unterminated quote");
  out.push_back(std::move(cell));
  return out;
}

bool needs_quotes(const std::string& s, char delim) {
  return s.find_first_of(std::string{delim, '"', '\n'}) != std::string::npos;
}

}  // namespace

std::optional<std::size_t> Table::find(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  return std::nullopt;
}

const std::vector<std::string>& Table::column(std::string_view name) const {
  const auto i = find(name);
  if (!i) throw SchemaError("column '" + std::string(name) + "' not present");
  return columns[*i];
}

void Table::add_column(std::string name, std::vector<std::string> values) {
  if (!names.empty() && values.size() != row_count()) {
    throw DimensionError("column '" + name + "' has " + std::to_string(values.size()) +
                         " rows, table has " + std::to_string(row_count()));
  }
  if (find(name)) throw SchemaError("duplicate column '" + name + "'");
  names.push_back(std::move(name));
  columns.push_back(std::move(values));
}

Table parse_delimited(std::string_view text, char delimiter) {
  Table table;
  std::size_t pos = 0, line_no = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      if (delimiter == '\0') delimiter = line.find('\t') != std::string_view::npos ? '\t' : ',';
      table.names = split_line(line, delimiter, line_no);
      for (std::size_t i = 0; i < table.names.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
          if (table.names[i] == table.names[j]) {
            throw DataError("header: duplicate column '" + table.names[i] + "'");
          }
        }
      }
      table.columns.resize(table.names.size());
      header = false;
      continue;
    }
    auto cells = split_line(line, delimiter, line_no);
    if (cells.size() != table.names.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(table.names.size()) + " fields, found " +
                      std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) table.columns[c].push_back(std::move(cells[c]));
  }
  if (header) throw DataError("input is empty (no header row)");
  return table;
}

Table read_delimited(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_delimited(buf.str(), delimiter);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_delimited(const std::filesystem::path& path, const Table& table, char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  auto emit = [&](const std::string& s) {
    if (!needs_quotes(s, delimiter)) {
      out << s;
      return;
    }
    out << '"';
    for (const char c : s) {
      if (c == '"') out << '"';
      out << c;
    }
    out << '"';
  };
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    if (c) out << delimiter;
    emit(table.names[c]);
  }
  out << '\n';
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      if (c) out << delimiter;
      emit(table.columns[c][r]);
    }
    out << '\n';
  }
}

double parse_number(std::string_view cell, std::string_view context) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || cell.empty()) {
    throw DataError(std::string(context) + ": '" + std::string(cell) + "' is not a number");
  }
  return v;
}

}  // namespace wmlff
