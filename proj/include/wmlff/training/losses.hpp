#pragma once

#include <span>

namespace wmlff {

inline constexpr double kProbabilityEps = 1e-7;

// Mean binary cross-entropy (natural log) with p clamped to [eps, 1 - eps].
double bce_loss(std::span<const double> y, std::span<const double> p, double eps = kProbabilityEps);

// -sum[c log c^ + (1-c) log(1-c^) + i log i^ + (1-i) log(1-i^)] / (2N)
double joint_bce_loss(std::span<const double> c, std::span<const double> c_hat,
                      std::span<const double> i, std::span<const double> i_hat,
                      double eps = kProbabilityEps);

double mse_loss(std::span<const double> y, std::span<const double> y_hat);

}  // namespace wmlff
