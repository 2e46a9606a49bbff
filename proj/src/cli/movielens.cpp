#include "wmlff/cli/movielens.hpp"

#include <fstream>
#include <optional>
#include <unordered_map>
#include <vector>

#include "wmlff/errors.hpp"
#include "wmlff/eval/metrics.hpp"
#include "wmlff/features/bias_stats.hpp"

namespace wmlff {

namespace {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.emplace_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string layout_hint(const std::filesystem::path& dir, std::string_view split_name) {
  return "expected MovieLens-100k layout under '" + dir.string() + "': u.user, u.item, " +
         std::string(split_name) + ".base, " + std::string(split_name) + ".test";
}

template <typename F>
void for_lines(const std::filesystem::path& path, const std::string& hint, F&& f) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing '" + path.filename().string() + "'; " + hint);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    f(line, n);
  }
}

struct User {
  std::string age, gender, occupation;
};

struct Ratings {
  std::vector<std::string> users, items;
  std::vector<double> ratings;
};

Ratings read_ratings(const std::filesystem::path& path, const std::string& hint) {
  Ratings r;
  for_lines(path, hint, [&](const std::string& line, std::size_t n) {
    auto f = split(line, '\t');
    if (f.size() != 4) {
      throw DataError(path.filename().string() + " line " + std::to_string(n) + ": expected 4 fields");
    }
    r.users.push_back(std::move(f[0]));
    r.items.push_back(std::move(f[1]));
    r.ratings.push_back(parse_number(f[2], path.filename().string() + " line " + std::to_string(n)));
  });
  return r;
}

}  // namespace

MovieLensSplit adapt_movielens(const std::filesystem::path& raw_dir, std::string_view split_name,
                               bool bias_stats, BiasStdRatio ratio) {
  const auto hint = layout_hint(raw_dir, split_name);
  if (!std::filesystem::is_directory(raw_dir)) throw DataError("no directory '" + raw_dir.string() + "'; " + hint);

  std::unordered_map<std::string, User> users;
  for_lines(raw_dir / "u.user", hint, [&](const std::string& line, std::size_t n) {
    const auto f = split(line, '|');
    if (f.size() != 5) throw DataError("u.user line " + std::to_string(n) + ": expected 5 fields");
    if (f[2] != "M" && f[2] != "F") throw DataError("u.user line " + std::to_string(n) + ": gender must be M or F");
    users[f[0]] = {f[1], f[2], f[3]};
  });
  std::unordered_map<std::string, std::vector<std::string>> genres;
  for_lines(raw_dir / "u.item", hint, [&](const std::string& line, std::size_t n) {
    const auto f = split(line, '|');
    if (f.size() != 5 + kMovieLensGenres.size()) {
      throw DataError("u.item line " + std::to_string(n) + ": expected 24 fields");
    }
    genres[f[0]] = {f.begin() + 5, f.end()};
  });

  const auto base = read_ratings(raw_dir / (std::string(split_name) + ".base"), hint);
  const auto test = read_ratings(raw_dir / (std::string(split_name) + ".test"), hint);
  std::optional<BiasStats> stats;
  if (bias_stats) stats = BiasStats::fit(base.users, base.items, base.ratings, ratio, true);

  auto build = [&](const Ratings& r) {
    const std::size_t n = r.ratings.size();
    std::vector<std::vector<std::string>> cols(4 + kMovieLensGenres.size() + 3 + (stats ? 4 : 0));
    for (auto& c : cols) c.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto u = users.find(r.users[i]);
      if (u == users.end()) throw DataError("rating row " + std::to_string(i + 1) + ": user " + r.users[i] + " not in u.user");
      const auto g = genres.find(r.items[i]);
      if (g == genres.end()) throw DataError("rating row " + std::to_string(i + 1) + ": movie " + r.items[i] + " not in u.item");
      std::size_t c = 0;
      cols[c++].push_back(r.users[i]);
      cols[c++].push_back(r.items[i]);
      cols[c++].push_back(u->second.occupation);
      cols[c++].push_back(u->second.age);
      for (const auto& flag : g->second) cols[c++].push_back(flag);
      cols[c++].push_back(u->second.gender == "M" ? "1" : "0");
      cols[c++].push_back(u->second.gender == "F" ? "1" : "0");
      if (stats) {
        for (const double v : stats->derive(r.users[i], r.items[i])) cols[c++].push_back(format_double(v));
      }
      cols[c++].push_back(format_double(r.ratings[i]));
    }
    return cols;
  };

  std::vector<std::pair<std::string, DeclaredRole>> roles = {{"user", DeclaredRole::high_card_cat},
                                                             {"movie", DeclaredRole::high_card_cat},
                                                             {"occupation", DeclaredRole::high_card_cat},
                                                             {"age", DeclaredRole::high_card_cat}};
  for (const auto g : kMovieLensGenres) roles.emplace_back("genre_" + std::string(g), DeclaredRole::binary);
  roles.emplace_back("gender_m", DeclaredRole::binary);
  roles.emplace_back("gender_f", DeclaredRole::binary);
  if (stats) {
    for (const auto name : BiasStats::kFeatureNames) roles.emplace_back(std::string(name), DeclaredRole::numeric);
  }
  roles.emplace_back("rating", DeclaredRole::label_rating);

  MovieLensSplit out;
  auto to_table = [&](std::vector<std::vector<std::string>> cols) {
    Table t;
    for (std::size_t c = 0; c < cols.size(); ++c) t.add_column(roles[c].first, std::move(cols[c]));
    return t;
  };
  out.train = to_table(build(base));
  out.test = to_table(build(test));
  out.schema.columns = std::move(roles);
  out.schema.bias_std_ratio = ratio;
  return out;
}

void write_movielens(const std::filesystem::path& out_dir, const MovieLensSplit& split) {
  std::filesystem::create_directories(out_dir);
  write_delimited(out_dir / "train.csv", split.train);
  write_delimited(out_dir / "test.csv", split.test);
  std::ofstream sc(out_dir / "schema.cfg", std::ios::binary);
  if (!sc) throw DataError("cannot write '" + (out_dir / "schema.cfg").string() + "'");
  sc << format_schema_config(split.schema);
}

}  // namespace wmlff
