#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "wmlff/numerics/tape.hpp"

namespace wmlff {

enum class OptimizerKind { adam, adamw, radam };
std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::radam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled for AdamW (default 1e-2), added to the gradient otherwise (default 0).
  std::optional<double> weight_decay;

  double effective_weight_decay() const {
    return weight_decay.value_or(kind == OptimizerKind::adamw ? 1e-2 : 0.0);
  }
};

// First/second moment accumulators mirroring the parameter shapes.
struct OptimizerState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::size_t step = 0;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig config, const ParameterSet& params);

  void step(ParameterSet& params, const Gradients& grads);
  const OptimizerState& state() const { return state_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  OptimizerState state_;
};

}  // namespace wmlff
