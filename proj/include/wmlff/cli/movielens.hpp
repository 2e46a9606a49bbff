#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include "wmlff/features/schema.hpp"
#include "wmlff/features/table.hpp"

namespace wmlff {

inline constexpr std::array<std::string_view, 19> kMovieLensGenres = {
    "unknown", "action",  "adventure", "animation", "childrens", "comedy",  "crime",
    "documentary", "drama", "fantasy",  "film_noir", "horror",    "musical", "mystery",
    "romance", "sci_fi",  "thriller",  "war",       "western"};

struct MovieLensSplit {
  Table train;
  Table test;
  SchemaConfig schema;
};

// Reads <raw_dir>/{u.user, u.item, <split>.base, <split>.test}. With bias_stats
// the four user/item rating statistics of the training ratings are appended
// to both tables.
MovieLensSplit adapt_movielens(const std::filesystem::path& raw_dir, std::string_view split = "u1",
                               bool bias_stats = false,
                               BiasStdRatio ratio = BiasStdRatio::mu_over_sigma);

// Writes train.csv, test.csv and schema.cfg.
void write_movielens(const std::filesystem::path& out_dir, const MovieLensSplit& split);

}  // namespace wmlff
