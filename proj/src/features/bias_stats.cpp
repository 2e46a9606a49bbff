#include "wmlff/features/bias_stats.hpp"

#include <cmath>

#include "wmlff/errors.hpp"

namespace wmlff {

namespace {

std::vector<std::pair<std::string, EntityStats>> group_stats(std::span<const std::string> keys,
                                                             std::span<const double> ratings,
                                                             BiasStdRatio ratio) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::string> order;
  std::vector<std::vector<double>> groups;
  for (std::size_t r = 0; r < keys.size(); ++r) {
    auto [it, inserted] = slot.try_emplace(keys[r], order.size());
    if (inserted) {
      order.push_back(keys[r]);
      groups.emplace_back();
    }
    groups[it->second].push_back(ratings[r]);
  }
  std::vector<std::pair<std::string, EntityStats>> out;
  out.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.emplace_back(std::move(order[i]), entity_stats(groups[i], ratio));
  }
  return out;
}

}  // namespace

EntityStats entity_stats(std::span<const double> ratings, BiasStdRatio ratio) {
  EntityStats s;
  if (ratings.empty()) return s;
  double sum = 0.0;
  for (const double r : ratings) sum += r;
  const double mu = sum / static_cast<double>(ratings.size());
  double ss = 0.0;
  for (const double r : ratings) ss += (r - mu) * (r - mu);
  const double sigma = std::sqrt(ss / static_cast<double>(ratings.size()));
  s.average = mu;
  if (ratio == BiasStdRatio::mu_over_sigma) {
    s.ratio = sigma == 0.0 ? 0.0 : mu / sigma;
  } else {
    s.ratio = mu == 0.0 ? 0.0 : sigma / mu;
  }
  return s;
}

BiasStats BiasStats::fit(std::span<const std::string> users, std::span<const std::string> items,
                         std::span<const double> ratings, BiasStdRatio ratio,
                         bool rescale_average) {
  if (users.size() != ratings.size() || items.size() != ratings.size()) {
    throw DimensionError("bias stats: user/item/rating columns differ in length");
  }
  if (ratings.empty()) throw SchemaError("bias stats need at least one rating");
  BiasStats b;
  b.ratio_ = ratio;
  b.rescale_average_ = rescale_average;
  b.global_ = entity_stats(ratings, ratio);
  b.users_ = group_stats(users, ratings, ratio);
  b.items_ = group_stats(items, ratings, ratio);
  b.rebuild_index();
  return b;
}

BiasStats BiasStats::restore(BiasStdRatio ratio, bool rescale_average, EntityStats global,
                             std::vector<std::pair<std::string, EntityStats>> users,
                             std::vector<std::pair<std::string, EntityStats>> items) {
  BiasStats b;
  b.ratio_ = ratio;
  b.rescale_average_ = rescale_average;
  b.global_ = global;
  b.users_ = std::move(users);
  b.items_ = std::move(items);
  b.rebuild_index();
  return b;
}

void BiasStats::rebuild_index() {
  user_index_.clear();
  item_index_.clear();
  for (std::size_t i = 0; i < users_.size(); ++i) user_index_.emplace(users_[i].first, i);
  for (std::size_t i = 0; i < items_.size(); ++i) item_index_.emplace(items_[i].first, i);
}

double BiasStats::scale_average(double avg) const {
  return rescale_average_ ? rescale_rating(avg) : avg;
}

std::array<double, 4> BiasStats::derive(std::string_view user, std::string_view item) const {
  const auto u = user_index_.find(std::string(user));
  const auto i = item_index_.find(std::string(item));
  const EntityStats& us = u == user_index_.end() ? global_ : users_[u->second].second;
  const EntityStats& is = i == item_index_.end() ? global_ : items_[i->second].second;
  return {scale_average(us.average), us.ratio, scale_average(is.average), is.ratio};
}

std::array<std::vector<double>, 4> derive_bias_stats(std::span<const double> ratings,
                                                     std::span<const std::string> users,
                                                     std::span<const std::string> items,
                                                     BiasStdRatio ratio, bool rescale_average) {
  const auto stats = BiasStats::fit(users, items, ratings, ratio, rescale_average);
  std::array<std::vector<double>, 4> out;
  for (auto& c : out) c.reserve(ratings.size());
  for (std::size_t r = 0; r < ratings.size(); ++r) {
    const auto v = stats.derive(users[r], items[r]);
    for (std::size_t k = 0; k < 4; ++k) out[k].push_back(v[k]);
  }
  return out;
}

}  // namespace wmlff
