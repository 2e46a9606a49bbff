#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wmlff/features/bias_stats.hpp"
#include "wmlff/features/encoders.hpp"
#include "wmlff/features/schema.hpp"
#include "wmlff/features/table.hpp"
#include "wmlff/numerics/matrix.hpp"

namespace wmlff {

// One instance per row: ordinal ids for the high-cardinality columns and a
// dense real vector for everything else.
struct EncodedDataset {
  std::size_t rows = 0;
  std::size_t n_categorical = 0;
  std::vector<std::int32_t> categorical;  // row-major [rows x n_categorical]
  Matrix numeric;                         // [rows x n_numeric]
  std::vector<std::size_t> cardinalities;
  std::optional<std::vector<double>> click;
  std::optional<std::vector<double>> install;
  std::optional<std::vector<double>> rating;  // raw rating scale

  std::size_t n_numeric() const { return numeric.cols(); }
  std::span<const std::int32_t> categorical_row(std::size_t r) const {
    return {categorical.data() + r * n_categorical, n_categorical};
  }
  // Rows in the given order (duplicates allowed).
  EncodedDataset subset(std::span<const std::size_t> indices) const;
};

enum class EncodeMode { fit, transform };

class FeaturePipeline {
 public:
  using Encoder = std::variant<std::monostate, OrdinalEncoder, TargetEncoder, NumericStandardizer>;

  struct FittedColumn {
    std::string name;
    DeclaredRole declared = DeclaredRole::categorical;
    ColumnRole role = ColumnRole::ignore;
    Encoder encoder;
  };

  FeaturePipeline() = default;
  explicit FeaturePipeline(SchemaConfig config);

  const SchemaConfig& config() const { return config_; }
  bool fitted() const { return fitted_; }
  const FeatureSchema& schema() const { return schema_; }
  const std::vector<FittedColumn>& columns() const { return columns_; }
  const std::optional<BiasStats>& bias_stats() const { return bias_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // Fits every encoder on `rows` (fit mode), then encodes them.
  EncodedDataset encode(const Table& rows, EncodeMode mode);
  EncodedDataset transform(const Table& rows) const;

  std::vector<std::size_t> cardinalities() const;
  std::vector<std::string> numeric_feature_names() const;
  std::size_t numeric_width() const { return numeric_feature_names().size(); }
  std::optional<std::string> label_column(ColumnRole role) const;

  std::string to_json() const;
  static FeaturePipeline from_json(std::string_view text);

 private:
  void fit(const Table& rows);

  SchemaConfig config_;
  bool fitted_ = false;
  FeatureSchema schema_;
  std::vector<FittedColumn> columns_;
  std::optional<BiasStats> bias_;
  std::vector<std::string> warnings_;
};

EncodedDataset encode_dataset(FeaturePipeline& pipeline, const Table& rows, EncodeMode mode);

}  // namespace wmlff
