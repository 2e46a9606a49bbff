#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wmlff/numerics/matrix.hpp"

namespace wmlff {

struct Parameter {
  std::string name;
  Matrix value;
  friend bool operator==(const Parameter&, const Parameter&) = default;
};

// Ordered, named collection of learnable tensors. Indices are stable.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix init);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<Parameter> params_;
};

// One gradient per parameter, same shapes, zero where the output does not depend on it.
using Gradients = std::vector<Matrix>;

class Tape;

// Handle to a node on a specific tape.
class Var {
 public:
  Var() = default;

 private:
  friend class Tape;
  Var(std::uint64_t tape_id, std::size_t index) : tape_id_(tape_id), index_(index) {}
  std::uint64_t tape_id_ = 0;
  std::size_t index_ = 0;
};

// Reverse-mode differentiation record. Every op is evaluated eagerly on
// batched row-major values (one row per instance); when recording, each op also
// stores a closure that maps its output adjoint onto its inputs. A tape built
// with recording disabled runs the same forward arithmetic and cannot be
// differentiated.
class Tape {
 public:
  explicit Tape(bool recording = true);
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }

  Var constant(Matrix value);
  // Leaf bound to params[index]; the value is read by reference, so the
  // parameter must outlive the tape and stay unchanged until backward().
  Var parameter(const ParameterSet& params, std::size_t index);

  const Matrix& value(Var v) const;

  // x [B x n], w [m x n], b [1 x m]  ->  x w^T + b  [B x m]
  Var affine(Var x, Var w, Var b);
  // x [B x n], w [m x n]  ->  x w^T  [B x m]
  Var linear(Var x, Var w);
  Var leaky_relu(Var x, double slope);
  // Elementwise product with a fixed multiplier (no gradient to the multiplier).
  Var mul_const(Var x, Matrix multiplier);
  Var mul(Var a, Var b);
  Var add(Var a, Var b);
  Var scale_const(Var x, double c);
  // x times a learnable [1 x 1] scalar.
  Var scale(Var x, Var s);
  // Mean of table rows selected by ids; ids is row-major [B x k]. k = 0 gives [B x 0].
  Var embed_mean(Var table, std::span<const std::int32_t> ids, std::size_t ids_per_row);
  Var concat_cols(std::span<const Var> parts);
  // Per-row inner product  [B x 1].
  Var row_dot(Var a, Var b);
  // Per-row cosine similarity [B x 1]. Zero rows give 0 with zero gradient.
  Var row_cosine(Var a, Var b);
  Var sigmoid(Var x);
  // Sum of all entries [1 x 1].
  Var sum(Var x);
  // Mean binary cross-entropy of probabilities p [B x 1] against labels, with
  // p clamped to [eps, 1 - eps]; clamped entries pass no gradient.
  Var bce_mean(Var p, std::span<const double> labels, double eps);
  // Same loss as bce_mean(sigmoid(z)) for logits z [B x 1], evaluated through
  // softplus so that saturated outputs keep full precision. The clamp becomes
  // |z| <= log((1 - eps) / eps).
  Var bce_logits_mean(Var z, std::span<const double> labels, double eps);
  // Mean squared error of p [B x 1] against targets.
  Var mse_mean(Var p, std::span<const double> targets);

  // Gradients of a recorded [1 x 1] output for every parameter in params.
  Gradients backward(Var output, const ParameterSet& params) const;

 private:
  using Adjoints = std::vector<Matrix>;
  using Backprop = std::function<void(const Tape&, const Matrix& out_adjoint, Adjoints&)>;

  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    std::optional<std::size_t> param_index;
    Backprop backprop;
    const Matrix& value() const { return external ? *external : owned; }
  };

  std::size_t check(Var v) const;
  Var push(Matrix value, Backprop backprop);
  Matrix& adjoint_of(Adjoints& adj, std::size_t index) const;

  std::uint64_t id_;
  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace wmlff
