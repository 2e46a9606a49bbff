#include "wmlff/eval/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "wmlff/errors.hpp"
#include "wmlff/features/bias_stats.hpp"

namespace wmlff {

namespace {

void require_lengths(const char* what, std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": lengths " + std::to_string(a) + " and " +
                         std::to_string(b));
  }
  if (a == 0) throw DimensionError(std::string(what) + ": empty input");
}

}  // namespace

double log_loss(std::span<const double> p, std::span<const double> y, double eps) {
  require_lengths("log_loss", p.size(), y.size());
  return bce_loss(y, p, eps);
}

double normalized_cross_entropy(std::span<const double> p, std::span<const double> y, double eps) {
  require_lengths("normalized_cross_entropy", p.size(), y.size());
  const double base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  if (!(base > 0.0 && base < 1.0)) {
    throw DataError("normalized cross-entropy is undefined when all labels are equal");
  }
  const std::vector<double> constant(y.size(), base);
  return log_loss(p, y, eps) / log_loss(constant, y, eps);
}

double auc(std::span<const double> p, std::span<const double> y) {
  require_lengths("auc", p.size(), y.size());
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  double positives = 0.0, rank_sum = 0.0;
  for (const double v : y) positives += v > 0.5;
  const double negatives = static_cast<double>(y.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) throw DataError("AUC needs both classes");
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && p[order[j + 1]] == p[order[i]]) ++j;
    // Ranks i+1..j+1 share their mean.
    const double mid = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) {
      if (y[order[k]] > 0.5) rank_sum += mid;
    }
    i = j + 1;
  }
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double rmse(std::span<const double> predicted, std::span<const double> actual) {
  require_lengths("rmse", predicted.size(), actual.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    acc += (predicted[k] - actual[k]) * (predicted[k] - actual[k]);
  }
  return std::sqrt(acc / static_cast<double>(predicted.size()));
}

double rmse_ratings(std::span<const double> output, std::span<const double> y_raw,
                    OutputKind output_mode) {
  if (output_mode == OutputKind::linear) return rmse(output, y_raw);
  std::vector<double> ratings;
  ratings.reserve(output.size());
  for (const double p : output) ratings.push_back(unscale_rating(p));
  return rmse(ratings, y_raw);
}

std::string config_hash(std::string_view canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void MetricsReport::add(std::string name, double value) {
  if (!std::isfinite(value)) throw NumericalError("metric '" + name + "' is not finite");
  for (auto& [k, v] : values) {
    if (k == name) {
      v = value;
      return;
    }
  }
  values.emplace_back(std::move(name), value);
}

std::optional<double> MetricsReport::get(std::string_view name) const {
  for (const auto& [k, v] : values) {
    if (k == name) return v;
  }
  return std::nullopt;
}

std::string MetricsReport::to_key_value() const {
  std::ostringstream out;
  if (!dataset.empty()) out << "dataset=" << dataset << "\n";
  if (!config_hash.empty()) out << "config_hash=" << config_hash << "\n";
  for (const auto& [k, v] : values) out << k << "=" << format_double(v) << "\n";
  out << "wall_clock_seconds=" << format_double(wall_clock_seconds) << "\n";
  return out.str();
}

void write_metrics_table(const std::filesystem::path& path, std::span<const MetricsReport> reports,
                         std::string_view first_column, std::span<const std::string> row_names) {
  std::vector<std::string> columns;
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.values) {
      if (std::find(columns.begin(), columns.end(), k) == columns.end()) columns.push_back(k);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << first_column << "\tconfig_hash";
  for (const auto& c : columns) out << '\t' << c;
  out << "\twall_clock_seconds\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    out << (i < row_names.size() ? row_names[i] : r.dataset) << '\t' << r.config_hash;
    for (const auto& c : columns) {
      const auto v = r.get(c);
      out << '\t' << (v ? format_double(*v) : "");
    }
    out << '\t' << format_double(r.wall_clock_seconds) << '\n';
  }
}

}  // namespace wmlff
