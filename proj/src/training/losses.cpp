#include "wmlff/training/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "wmlff/errors.hpp"

namespace wmlff {

namespace {

void require_lengths(const char* what, std::size_t a, std::size_t b) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": lengths " + std::to_string(a) + " and " +
                         std::to_string(b));
  }
  if (a == 0) throw DimensionError(std::string(what) + ": empty input");
}

double bce_sum(std::span<const double> y, std::span<const double> p, double eps) {
  double acc = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double q = std::clamp(p[k], eps, 1.0 - eps);
    acc += y[k] * std::log(q) + (1.0 - y[k]) * std::log(1.0 - q);
  }
  return -acc;
}

}  // namespace

double bce_loss(std::span<const double> y, std::span<const double> p, double eps) {
  require_lengths("bce_loss", y.size(), p.size());
  return bce_sum(y, p, eps) / static_cast<double>(y.size());
}

double joint_bce_loss(std::span<const double> c, std::span<const double> c_hat,
                      std::span<const double> i, std::span<const double> i_hat, double eps) {
  require_lengths("joint_bce_loss", c.size(), c_hat.size());
  require_lengths("joint_bce_loss", i.size(), i_hat.size());
  require_lengths("joint_bce_loss", c.size(), i.size());
  return (bce_sum(c, c_hat, eps) + bce_sum(i, i_hat, eps)) / (2.0 * static_cast<double>(c.size()));
}

double mse_loss(std::span<const double> y, std::span<const double> y_hat) {
  require_lengths("mse_loss", y.size(), y_hat.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) acc += (y[k] - y_hat[k]) * (y[k] - y_hat[k]);
  return acc / static_cast<double>(y.size());
}

}  // namespace wmlff
