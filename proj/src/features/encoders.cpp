#include "wmlff/features/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wmlff/errors.hpp"
#include "wmlff/features/table.hpp"

namespace wmlff {

std::vector<std::string> categories_by_frequency(std::span<const std::string> column) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::string> seen;
  std::vector<std::size_t> counts;
  for (const auto& v : column) {
    if (is_null(v)) continue;
    auto [it, inserted] = slot.try_emplace(v, seen.size());
    if (inserted) {
      seen.push_back(v);
      counts.push_back(0);
    }
    ++counts[it->second];
  }
  std::vector<std::size_t> order(seen.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return counts[a] > counts[b]; });
  std::vector<std::string> out;
  out.reserve(order.size());
  for (const auto i : order) out.push_back(std::move(seen[i]));
  return out;
}

OrdinalEncoder::OrdinalEncoder(std::vector<std::string> categories)
    : categories_(std::move(categories)) {
  if (categories_.empty()) throw SchemaError("ordinal encoder needs at least one category");
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    if (!index_.emplace(categories_[i], static_cast<std::int32_t>(i)).second) {
      throw SchemaError("duplicate category '" + categories_[i] + "'");
    }
  }
}

OrdinalEncoder OrdinalEncoder::fit(std::span<const std::string> column) {
  auto cats = categories_by_frequency(column);
  if (cats.empty()) throw SchemaError("cannot fit an ordinal encoder on an all-null column");
  return OrdinalEncoder(std::move(cats));
}

std::int32_t OrdinalEncoder::encode(std::string_view value) const {
  if (is_null(value)) return fallback_id();
  const auto it = index_.find(std::string(value));
  return it == index_.end() ? fallback_id() : it->second;
}

std::int32_t OrdinalEncoder::encode(const std::optional<std::string>& value) const {
  return value ? encode(std::string_view(*value)) : fallback_id();
}

bool OrdinalEncoder::contains(std::string_view value) const {
  return index_.contains(std::string(value));
}

TargetEncoder::TargetEncoder(std::vector<std::string> categories,
                             std::vector<std::vector<double>> rates)
    : categories_(std::move(categories)), rates_(std::move(rates)) {
  if (categories_.empty() || categories_.size() != rates_.size()) {
    throw SchemaError("target encoder needs one rate row per category");
  }
  label_count_ = rates_.front().size();
  for (std::size_t i = 0; i < categories_.size(); ++i) {
    if (rates_[i].size() != label_count_) throw SchemaError("ragged target encoder rates");
    index_.emplace(categories_[i], i);
  }
}

TargetEncoder TargetEncoder::fit(std::span<const std::string> column,
                                 const std::vector<std::span<const double>>& labels) {
  if (labels.empty()) throw SchemaError("target encoding needs at least one label column");
  for (const auto& l : labels) {
    if (l.size() != column.size()) {
      throw DimensionError("target encoder: " + std::to_string(column.size()) + " values and " +
                           std::to_string(l.size()) + " labels");
    }
  }
  auto cats = categories_by_frequency(column);
  if (cats.empty()) throw SchemaError("cannot fit a target encoder on an all-null column");
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < cats.size(); ++i) slot.emplace(cats[i], i);
  std::vector<std::vector<double>> sums(cats.size(), std::vector<double>(labels.size(), 0.0));
  std::vector<std::size_t> counts(cats.size(), 0);
  for (std::size_t r = 0; r < column.size(); ++r) {
    if (is_null(column[r])) continue;
    const std::size_t c = slot.at(column[r]);
    ++counts[c];
    for (std::size_t k = 0; k < labels.size(); ++k) sums[c][k] += labels[k][r];
  }
  for (std::size_t c = 0; c < cats.size(); ++c) {
    for (auto& s : sums[c]) s /= static_cast<double>(counts[c]);
  }
  return TargetEncoder(std::move(cats), std::move(sums));
}

TargetEncoder TargetEncoder::fit(std::span<const std::string> column,
                                 std::span<const double> clicks,
                                 std::span<const double> installs) {
  return fit(column, std::vector<std::span<const double>>{clicks, installs});
}

std::span<const double> TargetEncoder::encode(std::string_view value) const {
  if (!is_null(value)) {
    const auto it = index_.find(std::string(value));
    if (it != index_.end()) return rates_[it->second];
  }
  return rates_.front();
}

NumericStandardizer NumericStandardizer::fit(std::span<const double> values, double lambda) {
  std::size_t n = 0;
  double sum = 0.0;
  for (const double v : values) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  if (n == 0) throw SchemaError("numeric column has no observed values");
  NumericStandardizer s;
  s.lambda = lambda;
  s.mu = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const double v : values) {
    if (std::isnan(v)) continue;
    ss += (v - s.mu) * (v - s.mu);
  }
  s.sigma = std::sqrt(ss / static_cast<double>(n));
  return s;
}

double NumericStandardizer::standardize(double x) const {
  if (constant()) return 0.0;
  return (x - mu) / (lambda * sigma);
}

double NumericStandardizer::transform(std::optional<double> value) const {
  const double x = value.value_or(mu);
  return piecewise_log(standardize(x));
}

double piecewise_log(double t) {
  if (t >= 1.0) return std::log2(t + 1.0);
  if (t <= -1.0) return -std::log2(-t + 1.0);
  return t;
}

}  // namespace wmlff
