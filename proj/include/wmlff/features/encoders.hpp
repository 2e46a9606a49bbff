#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace wmlff {

// Categories ordered by descending training frequency, ties by first
// occurrence. Nulls are not categories.
std::vector<std::string> categories_by_frequency(std::span<const std::string> column);

// Dense ids 0..k-1 in frequency order; nulls and unseen values map to the
// modal category, which is id 0.
class OrdinalEncoder {
 public:
  OrdinalEncoder() = default;
  explicit OrdinalEncoder(std::vector<std::string> categories);

  static OrdinalEncoder fit(std::span<const std::string> column);

  std::int32_t encode(std::string_view value) const;
  std::int32_t encode(const std::optional<std::string>& value) const;
  std::int32_t encode(const char* value) const { return encode(std::string_view(value)); }
  std::int32_t encode(const std::string& value) const { return encode(std::string_view(value)); }
  std::int32_t fallback_id() const { return 0; }
  std::size_t cardinality() const { return categories_.size(); }
  const std::vector<std::string>& categories() const { return categories_; }
  // Whether the value was seen at fit time.
  bool contains(std::string_view value) const;

 private:
  std::vector<std::string> categories_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Per-category mean of each label column: P(label = 1 | column = c) for binary
// labels. Nulls and unseen categories use the modal category's rates.
class TargetEncoder {
 public:
  TargetEncoder() = default;
  TargetEncoder(std::vector<std::string> categories, std::vector<std::vector<double>> rates);

  // labels[k] is the k-th label column, aligned with `column`.
  static TargetEncoder fit(std::span<const std::string> column,
                           const std::vector<std::span<const double>>& labels);
  // Click / install pair.
  static TargetEncoder fit(std::span<const std::string> column, std::span<const double> clicks,
                           std::span<const double> installs);

  std::span<const double> encode(std::string_view value) const;
  std::size_t label_count() const { return label_count_; }
  const std::vector<std::string>& categories() const { return categories_; }
  const std::vector<std::vector<double>>& rates() const { return rates_; }
  const std::string& fallback_category() const { return categories_.front(); }

 private:
  std::vector<std::string> categories_;
  std::vector<std::vector<double>> rates_;
  std::size_t label_count_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

// Mean imputation, then t = (x - mu) / (lambda * sigma), then the piecewise
// transform: linear on (-1, 1), +-log2(|t| + 1) outside.
struct NumericStandardizer {
  double mu = 0.0;
  double sigma = 0.0;
  double lambda = 3.0;

  // Population statistics over non-null cells. Throws SchemaError if all are null.
  static NumericStandardizer fit(std::span<const double> values, double lambda = 3.0);
  bool constant() const { return sigma == 0.0; }
  double standardize(double x) const;
  double transform(std::optional<double> value) const;
};

double piecewise_log(double t);

}  // namespace wmlff
