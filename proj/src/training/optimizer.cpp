#include "wmlff/training/optimizer.hpp"

#include <cmath>
#include <string>

#include "wmlff/errors.hpp"

namespace wmlff {

std::string_view to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::adamw: return "adamw";
    case OptimizerKind::radam: return "radam";
  }
  return "?";
}

OptimizerKind parse_optimizer_kind(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "radam") return OptimizerKind::radam;
  throw UsageError("optimizer must be adam, adamw or radam, got '" + std::string(s) + "'");
}

Optimizer::Optimizer(OptimizerConfig config, const ParameterSet& params) : config_(config) {
  for (const auto& p : params) {
    state_.first_moment.emplace_back(p.value.rows(), p.value.cols());
    state_.second_moment.emplace_back(p.value.rows(), p.value.cols());
  }
}

void Optimizer::step(ParameterSet& params, const Gradients& grads) {
  if (grads.size() != params.size() || state_.first_moment.size() != params.size()) {
    throw DimensionError("optimizer: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients");
  }
  const auto& c = config_;
  const std::size_t t = ++state_.step;
  const double td = static_cast<double>(t);
  const double bc1 = 1.0 - std::pow(c.beta1, td);
  const double bc2 = 1.0 - std::pow(c.beta2, td);
  const double wd = c.effective_weight_decay();

  // RAdam: length of the approximated simple moving average.
  double rect = 0.0;
  bool rectified = false;
  if (c.kind == OptimizerKind::radam) {
    const double rho_inf = 2.0 / (1.0 - c.beta2) - 1.0;
    const double rho_t = rho_inf - 2.0 * td * std::pow(c.beta2, td) / bc2;
    rectified = rho_t > 4.0;
    if (rectified) {
      rect = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                       ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    }
  }

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto theta = params[p].value.values();
    const auto g = grads[p].values();
    if (theta.size() != g.size()) {
      throw DimensionError("optimizer: gradient shape mismatch for " + params[p].name);
    }
    auto m = state_.first_moment[p].values();
    auto v = state_.second_moment[p].values();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      double gk = g[k];
      if (c.kind == OptimizerKind::adamw) {
        theta[k] -= c.lr * wd * theta[k];
      } else if (wd != 0.0) {
        gk += wd * theta[k];
      }
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      const double m_hat = m[k] / bc1;
      if (c.kind == OptimizerKind::radam) {
        if (rectified) {
          const double adaptive = std::sqrt(bc2) / (std::sqrt(v[k]) + c.eps);
          theta[k] -= c.lr * m_hat * rect * adaptive;
        } else {
          theta[k] -= c.lr * m_hat;
        }
      } else {
        const double v_hat = v[k] / bc2;
        theta[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
      }
    }
  }
}

}  // namespace wmlff
