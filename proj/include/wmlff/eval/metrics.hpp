#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wmlff/model/config.hpp"
#include "wmlff/training/losses.hpp"

namespace wmlff {

// -mean[y log p + (1 - y) log(1 - p)], p clamped to [eps, 1 - eps].
double log_loss(std::span<const double> p, std::span<const double> y, double eps = kProbabilityEps);

// Model log loss over the log loss of the constant base-rate predictor.
// Undefined (DataError) when all labels are equal.
double normalized_cross_entropy(std::span<const double> p, std::span<const double> y,
                                double eps = kProbabilityEps);

// Mann-Whitney AUC; tied scores count half. DataError for single-class labels.
double auc(std::span<const double> p, std::span<const double> y);

double rmse(std::span<const double> predicted, std::span<const double> actual);

// RMSE on the 1..5 rating scale: sigmoid outputs are mapped back with 1 + 4p,
// linear outputs are used as ratings directly.
double rmse_ratings(std::span<const double> output, std::span<const double> y_raw,
                    OutputKind output_mode);

// 64-bit FNV-1a, as 16 hex digits.
std::string config_hash(std::string_view canonical);

struct MetricsReport {
  std::string dataset;
  std::string config_hash;
  double wall_clock_seconds = 0.0;
  std::vector<std::pair<std::string, double>> values;

  // Throws NumericalError for a non-finite value.
  void add(std::string name, double value);
  std::optional<double> get(std::string_view name) const;
  // One key=value pair per line.
  std::string to_key_value() const;
};

// Tab-separated table: one row per report, union of metric names as columns.
void write_metrics_table(const std::filesystem::path& path, std::span<const MetricsReport> reports,
                         std::string_view first_column = "run",
                         std::span<const std::string> row_names = {});

std::string format_double(double v);

}  // namespace wmlff
