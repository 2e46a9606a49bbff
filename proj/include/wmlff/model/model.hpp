#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wmlff/model/config.hpp"
#include "wmlff/numerics/matrix.hpp"
#include "wmlff/numerics/rng.hpp"
#include "wmlff/numerics/tape.hpp"

namespace wmlff {

// Dense-layer parameter indices of one feature tower.
struct TowerSpec {
  std::string name;
  std::vector<std::size_t> weights;  // [dim x in] per level
  std::vector<std::size_t> biases;   // [1 x dim] per level
};

// A factorization head joins two towers level by level.
struct HeadSpec {
  std::string name;
  std::size_t tower_a = 0;
  std::size_t tower_b = 0;
  std::size_t level_weights = 0;  // [1 x depth]
};

struct ForwardTrace {
  std::vector<std::size_t> tower_evaluations;  // per tower
  // Smallest |pre-activation| seen; finite-difference checks use it to avoid kinks.
  double min_abs_preactivation = 0.0;
};

struct ForwardResult {
  std::vector<Var> logits;   // [B x 1] per task
  std::vector<Var> outputs;  // sigmoid(logit) or the logit itself
  ForwardTrace trace;
};

class WMLFFModel {
 public:
  // Fan-based uniform dense weights, zero biases, N(0, 1/dim) embeddings,
  // level weights and global scale at 1.
  static WMLFFModel init(const ModelConfig& config, Rng& rng);
  // Rebuilds a model around stored parameters; names and shapes must match.
  static WMLFFModel from_parameters(const ModelConfig& config, ParameterSet params);

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const std::vector<TowerSpec>& towers() const { return towers_; }
  const std::vector<HeadSpec>& heads() const { return heads_; }
  const std::vector<std::size_t>& embeddings() const { return embeddings_; }
  std::size_t global_scale() const { return global_scale_; }

  // Mean of the looked-up embedding rows concatenated with the numeric part.
  // ids is [B x n_categorical] row-major; numeric is [B x n_numeric].
  Var embed(Tape& tape, std::span<const std::int32_t> ids, const Matrix& numeric) const;
  // Per-level feature vectors of one tower.
  std::vector<Var> tower_forward(Tape& tape, const TowerSpec& tower, Var input, Rng* noise_rng,
                                 bool training, ForwardTrace* trace = nullptr) const;
  Var head_logit(Tape& tape, const HeadSpec& head, std::span<const Var> fa,
                 std::span<const Var> fb) const;
  // noise_rng may be null when training is false.
  ForwardResult forward(Tape& tape, std::span<const std::int32_t> ids, const Matrix& numeric,
                        Rng* noise_rng, bool training) const;

  // Rounds every parameter to the nearest 32-bit float (the stored precision).
  void round_to_float();

  friend bool operator==(const WMLFFModel& a, const WMLFFModel& b) {
    return a.config_ == b.config_ && a.params_ == b.params_;
  }

 private:
  explicit WMLFFModel(ModelConfig config);
  void build(Rng* rng);

  ModelConfig config_;
  ParameterSet params_;
  std::vector<std::size_t> embeddings_;
  std::vector<TowerSpec> towers_;
  std::vector<HeadSpec> heads_;
  std::size_t global_scale_ = 0;
};

std::size_t expected_parameter_count(const ModelConfig& config);

// Elementwise x * n, n ~ N(1, sigma) i.i.d., during training; identity otherwise.
Vector noise_layer(std::span<const double> x, Rng& rng, double sigma, bool training);
// Multiplier matrix for the tape version of the noise layer.
Matrix noise_multipliers(std::size_t rows, std::size_t cols, Rng& rng, double sigma);

// m * sum_l w_l * sim(a_l, b_l), sim = dot or cosine (0 for a zero vector).
double wmlff_head(HeadKind kind, double global_scale, std::span<const double> level_weights,
                  const std::vector<Vector>& fa, const std::vector<Vector>& fb);

// Single-instance convenience wrappers over WMLFFModel::forward.
Vector embed_features(const WMLFFModel& model, std::span<const std::int32_t> ids,
                      std::span<const double> numeric);
std::vector<double> predict(const WMLFFModel& model, std::span<const std::int32_t> ids,
                            std::span<const double> numeric, Rng* noise_rng, bool training);

}  // namespace wmlff
