#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wmlff {

enum class ColumnRole {
  high_card_cat,  // ordinal ids -> embedding lookup (X_c)
  low_card_cat,   // per-category label rates -> X_n
  numeric,        // impute, standardize, piecewise-log -> X_n
  binary,         // 0/1 passed to X_n unchanged
  label_click,
  label_install,
  label_rating,
  ignore,
};

// What a schema file may declare. `categorical` defers the high/low split to
// the cardinality threshold.
enum class DeclaredRole {
  categorical,
  high_card_cat,
  low_card_cat,
  numeric,
  binary,
  label_click,
  label_install,
  label_rating,
  ignore,
};

std::string_view to_string(ColumnRole role);
ColumnRole parse_column_role(std::string_view text);
std::string_view to_string(DeclaredRole role);
DeclaredRole parse_declared_role(std::string_view text);

bool is_label(ColumnRole role);

enum class BiasStdRatio { mu_over_sigma, sigma_over_mu };
std::string_view to_string(BiasStdRatio r);
BiasStdRatio parse_bias_std_ratio(std::string_view text);

struct ColumnStats {
  std::string name;
  DeclaredRole declared = DeclaredRole::categorical;
  std::size_t distinct = 0;
  std::size_t non_null = 0;
};

struct ColumnSpec {
  std::string name;
  ColumnRole role = ColumnRole::ignore;
  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

struct FeatureSchema {
  std::vector<ColumnSpec> columns;
  // Categorical columns with more distinct values than this are ordinal
  // encoded; exactly `threshold` distinct values counts as low-cardinality.
  std::size_t threshold = 20;

  std::vector<std::string> names_with(ColumnRole role) const;
  std::optional<ColumnRole> role_of(std::string_view name) const;
  std::size_t count(ColumnRole role) const;
  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

// Resolves declared roles to concrete ones. Throws SchemaError for a
// non-ignored column without a single observed value.
FeatureSchema infer_schema(const std::vector<ColumnStats>& stats, std::size_t threshold = 20);

// Options read from a schema config file:
//
//   # comment
//   threshold = 20
//   lambda = 3
//   delimiter = auto | comma | tab
//   bias_stats = false
//   bias_user = user
//   bias_item = movie
//   bias_std_ratio = mu_over_sigma | sigma_over_mu
//   rating_output = sigmoid | linear
//   column.<name> = categorical | high_card_cat | low_card_cat | numeric | binary
//                   | label_click | label_install | label_rating | ignore
//
// Every column of the data must be declared, in any order.
struct SchemaConfig {
  std::size_t threshold = 20;
  double lambda = 3.0;
  char delimiter = '\0';
  bool bias_stats = false;
  std::string bias_user;
  std::string bias_item;
  BiasStdRatio bias_std_ratio = BiasStdRatio::mu_over_sigma;
  // Averages derived from ratings follow the rating target rescale when the
  // model output is a sigmoid.
  bool rating_output_sigmoid = true;
  std::vector<std::pair<std::string, DeclaredRole>> columns;

  std::optional<DeclaredRole> declared(std::string_view name) const;
};

SchemaConfig parse_schema_config(std::string_view text);
SchemaConfig read_schema_config(const std::filesystem::path& path);
std::string format_schema_config(const SchemaConfig& config);

}  // namespace wmlff
