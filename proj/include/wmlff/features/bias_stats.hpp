#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wmlff/features/schema.hpp"

namespace wmlff {

// Per-entity rating statistics: average and "percent standard deviation".
// The ratio is mu/sigma by default (sigma/mu on request); sigma is the
// population standard deviation and sigma = 0 (or mu = 0 for sigma/mu) gives 0.
struct EntityStats {
  double average = 0.0;
  double ratio = 0.0;
  friend bool operator==(const EntityStats&, const EntityStats&) = default;
};

class BiasStats {
 public:
  BiasStats() = default;

  static BiasStats fit(std::span<const std::string> users, std::span<const std::string> items,
                       std::span<const double> ratings, BiasStdRatio ratio,
                       bool rescale_average);

  // user_avg, user_ratio, item_avg, item_ratio. Entities absent from the
  // training data get the global statistics.
  std::array<double, 4> derive(std::string_view user, std::string_view item) const;

  static constexpr std::array<std::string_view, 4> kFeatureNames{
      "user_avg", "user_pct_std", "item_avg", "item_pct_std"};

  BiasStdRatio ratio_kind() const { return ratio_; }
  bool rescale_average() const { return rescale_average_; }
  const EntityStats& global() const { return global_; }
  const std::vector<std::pair<std::string, EntityStats>>& users() const { return users_; }
  const std::vector<std::pair<std::string, EntityStats>>& items() const { return items_; }

  static BiasStats restore(BiasStdRatio ratio, bool rescale_average, EntityStats global,
                           std::vector<std::pair<std::string, EntityStats>> users,
                           std::vector<std::pair<std::string, EntityStats>> items);

 private:
  double scale_average(double avg) const;
  void rebuild_index();

  BiasStdRatio ratio_ = BiasStdRatio::mu_over_sigma;
  bool rescale_average_ = true;
  EntityStats global_;
  std::vector<std::pair<std::string, EntityStats>> users_;
  std::vector<std::pair<std::string, EntityStats>> items_;
  std::unordered_map<std::string, std::size_t> user_index_;
  std::unordered_map<std::string, std::size_t> item_index_;
};

EntityStats entity_stats(std::span<const double> ratings, BiasStdRatio ratio);

// Four derived columns (user avg, user ratio, item avg, item ratio) for every
// row, fitted on the same rows.
std::array<std::vector<double>, 4> derive_bias_stats(std::span<const double> ratings,
                                                     std::span<const std::string> users,
                                                     std::span<const std::string> items,
                                                     BiasStdRatio ratio, bool rescale_average);

// Maps a 1..5 rating onto [0, 1].
inline double rescale_rating(double r) { return (r - 1.0) / 4.0; }
inline double unscale_rating(double p) { return 1.0 + 4.0 * p; }

}  // namespace wmlff
