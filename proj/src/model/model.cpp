#include "wmlff/model/model.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include "wmlff/errors.hpp"

namespace wmlff {

namespace {

std::vector<std::pair<std::string, std::vector<std::string>>> layout(TowerLayout t) {
  switch (t) {
    case TowerLayout::dual:
      return {{"click", {"click", "shared"}}, {"install", {"install", "shared"}}};
    case TowerLayout::independent:
      return {{"click", {"click_a", "click_b"}}, {"install", {"install_a", "install_b"}}};
    case TowerLayout::single:
      return {{"main", {"a", "b"}}};
  }
  return {};
}

std::vector<std::string> tower_names(TowerLayout t) {
  switch (t) {
    case TowerLayout::dual: return {"click", "shared", "install"};
    case TowerLayout::independent: return {"click_a", "click_b", "install_a", "install_b"};
    case TowerLayout::single: return {"a", "b"};
  }
  return {};
}

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = limit * (2.0 * rng.uniform() - 1.0);
  return m;
}

Matrix normal_matrix(std::size_t rows, std::size_t cols, double sd, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = gaussian(rng, 0.0, sd);
  return m;
}

}  // namespace

WMLFFModel::WMLFFModel(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

void WMLFFModel::build(Rng* rng) {
  const std::size_t dim = config_.dim, depth = config_.depth;
  auto make = [&](const std::string& name, Matrix init) { return params_.add(name, std::move(init)); };

  for (std::size_t j = 0; j < config_.cardinalities.size(); ++j) {
    const std::size_t card = config_.cardinalities[j];
    embeddings_.push_back(make("embedding." + std::to_string(j),
                               rng ? normal_matrix(card, dim, 1.0 / std::sqrt(double(dim)), *rng)
                                   : Matrix(card, dim)));
  }
  for (const auto& name : tower_names(config_.towers)) {
    TowerSpec t{name, {}, {}};
    std::size_t in = config_.input_width();
    for (std::size_t l = 0; l < depth; ++l) {
      const std::string prefix = "tower." + name + ".dense" + std::to_string(l);
      const double limit = std::sqrt(6.0 / double(in + dim));
      t.weights.push_back(make(prefix + ".weight", rng ? uniform_matrix(dim, in, limit, *rng) : Matrix(dim, in)));
      t.biases.push_back(make(prefix + ".bias", Matrix(1, dim)));
      in = dim;
    }
    towers_.push_back(std::move(t));
  }
  const auto names = tower_names(config_.towers);
  auto tower_index = [&](const std::string& n) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == n) return i;
    }
    return std::size_t{0};
  };
  for (const auto& [head, pair] : layout(config_.towers)) {
    HeadSpec h{head, tower_index(pair[0]), tower_index(pair[1]), 0};
    h.level_weights = make("head." + head + ".level_weights", Matrix(1, depth, 1.0));
    heads_.push_back(std::move(h));
  }
  global_scale_ = make("global_scale", Matrix(1, 1, 1.0));
}

WMLFFModel WMLFFModel::init(const ModelConfig& config, Rng& rng) {
  WMLFFModel m(config);
  m.build(&rng);
  return m;
}

WMLFFModel WMLFFModel::from_parameters(const ModelConfig& config, ParameterSet params) {
  WMLFFModel m(config);
  m.build(nullptr);
  if (params.size() != m.params_.size()) {
    throw SchemaError("model expects " + std::to_string(m.params_.size()) + " tensors, got " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& want = m.params_[i];
    const auto& got = params[i];
    if (want.name != got.name || !want.value.same_shape(got.value)) {
      throw SchemaError("tensor " + std::to_string(i) + ": expected " + want.name + " " +
                        want.value.shape_string() + ", got " + got.name + " " + got.value.shape_string());
    }
  }
  m.params_ = std::move(params);
  return m;
}

Var WMLFFModel::embed(Tape& tape, std::span<const std::int32_t> ids, const Matrix& numeric) const {
  const std::size_t n_cat = embeddings_.size();
  const std::size_t batch = numeric.rows();
  if (numeric.cols() != config_.n_numeric) {
    throw DimensionError("numeric features " + numeric.shape_string() + ", model expects " +
                         std::to_string(config_.n_numeric) + " columns");
  }
  if (ids.size() != batch * n_cat) {
    throw DimensionError("expected " + std::to_string(batch * n_cat) + " categorical ids, got " +
                         std::to_string(ids.size()));
  }
  Var x_n = tape.constant(numeric);
  if (n_cat == 0) return x_n;
  Var acc;
  std::vector<std::int32_t> column(batch);
  for (std::size_t j = 0; j < n_cat; ++j) {
    for (std::size_t r = 0; r < batch; ++r) column[r] = ids[r * n_cat + j];
    Var e = tape.embed_mean(tape.parameter(params_, embeddings_[j]), column, 1);
    acc = j == 0 ? e : tape.add(acc, e);
  }
  if (n_cat > 1) acc = tape.scale_const(acc, 1.0 / double(n_cat));
  if (config_.n_numeric == 0) return acc;
  const Var parts[] = {acc, x_n};
  return tape.concat_cols(parts);
}

std::vector<Var> WMLFFModel::tower_forward(Tape& tape, const TowerSpec& tower, Var input,
                                           Rng* noise_rng, bool training,
                                           ForwardTrace* trace) const {
  const bool noisy = training && config_.noise_sigma > 0.0;
  if (noisy && !noise_rng) throw UsageError("training forward pass needs a noise generator");
  std::vector<Var> levels;
  Var prev = input;
  for (std::size_t l = 0; l < config_.depth; ++l) {
    Var h = tape.affine(prev, tape.parameter(params_, tower.weights[l]),
                        tape.parameter(params_, tower.biases[l]));
    if (noisy) {
      const Matrix& hv = tape.value(h);
      h = tape.mul_const(h, noise_multipliers(hv.rows(), hv.cols(), *noise_rng, config_.noise_sigma));
    }
    if (trace) {
      for (const double v : tape.value(h).values()) {
        trace->min_abs_preactivation = std::min(trace->min_abs_preactivation, std::abs(v));
      }
    }
    Var a = tape.leaky_relu(h, config_.activation_slope);
    levels.push_back(config_.tap == TapPoint::post ? a : h);
    prev = a;
  }
  return levels;
}

Var WMLFFModel::head_logit(Tape& tape, const HeadSpec& head, std::span<const Var> fa,
                           std::span<const Var> fb) const {
  if (fa.size() != config_.depth || fb.size() != config_.depth) {
    throw DimensionError("head '" + head.name + "': level counts " + std::to_string(fa.size()) +
                         " and " + std::to_string(fb.size()) + ", expected " +
                         std::to_string(config_.depth));
  }
  std::vector<Var> sims;
  sims.reserve(fa.size());
  for (std::size_t l = 0; l < fa.size(); ++l) {
    sims.push_back(config_.head == HeadKind::dot ? tape.row_dot(fa[l], fb[l]) : tape.row_cosine(fa[l], fb[l]));
  }
  Var stacked = sims.size() == 1 ? sims.front() : tape.concat_cols(sims);
  Var weighted = tape.linear(stacked, tape.parameter(params_, head.level_weights));
  return tape.scale(weighted, tape.parameter(params_, global_scale_));
}

ForwardResult WMLFFModel::forward(Tape& tape, std::span<const std::int32_t> ids,
                                  const Matrix& numeric, Rng* noise_rng, bool training) const {
  ForwardResult result;
  result.trace.tower_evaluations.assign(towers_.size(), 0);
  result.trace.min_abs_preactivation = std::numeric_limits<double>::infinity();
  const Var input = embed(tape, ids, numeric);
  std::vector<std::vector<Var>> features;
  features.reserve(towers_.size());
  for (std::size_t t = 0; t < towers_.size(); ++t) {
    features.push_back(tower_forward(tape, towers_[t], input, noise_rng, training, &result.trace));
    ++result.trace.tower_evaluations[t];
  }
  for (const auto& head : heads_) {
    Var logit = head_logit(tape, head, features[head.tower_a], features[head.tower_b]);
    result.logits.push_back(logit);
    result.outputs.push_back(config_.output == OutputKind::sigmoid ? tape.sigmoid(logit) : logit);
  }
  return result;
}

void WMLFFModel::round_to_float() {
  for (auto& p : params_) {
    for (auto& v : p.value.values()) v = static_cast<double>(static_cast<float>(v));
  }
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  std::size_t embed = 0;
  for (const auto card : c.cardinalities) embed += card * c.dim;
  const std::size_t first = c.input_width() * c.dim + c.dim;
  const std::size_t rest = (c.depth - 1) * (c.dim * c.dim + c.dim);
  const std::size_t n_towers = c.towers == TowerLayout::independent ? 4 : c.towers == TowerLayout::dual ? 3 : 2;
  const std::size_t n_heads = c.task_count();
  return embed + n_towers * (first + rest) + n_heads * c.depth + 1;
}

Vector noise_layer(std::span<const double> x, Rng& rng, double sigma, bool training) {
  Vector y(x.begin(), x.end());
  if (!training || sigma == 0.0) return y;
  for (auto& v : y) v *= gaussian(rng, 1.0, sigma);
  return y;
}

Matrix noise_multipliers(std::size_t rows, std::size_t cols, Rng& rng, double sigma) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = gaussian(rng, 1.0, sigma);
  return m;
}

double wmlff_head(HeadKind kind, double global_scale, std::span<const double> level_weights,
                  const std::vector<Vector>& fa, const std::vector<Vector>& fb) {
  if (fa.size() != fb.size() || fa.size() != level_weights.size()) {
    throw DimensionError("wmlff_head: " + std::to_string(fa.size()) + " and " +
                         std::to_string(fb.size()) + " levels with " +
                         std::to_string(level_weights.size()) + " weights");
  }
  double acc = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) {
    const double s = kind == HeadKind::dot ? dot(fa[l], fb[l]) : cosine(fa[l], fb[l]);
    acc += level_weights[l] * s;
  }
  return global_scale * acc;
}

Vector embed_features(const WMLFFModel& model, std::span<const std::int32_t> ids,
                      std::span<const double> numeric) {
  Tape tape(false);
  const auto v = tape.value(model.embed(tape, ids, Matrix::row_vector(numeric)));
  return Vector(v.values().begin(), v.values().end());
}

std::vector<double> predict(const WMLFFModel& model, std::span<const std::int32_t> ids,
                            std::span<const double> numeric, Rng* noise_rng, bool training) {
  Tape tape(false);
  const auto result = model.forward(tape, ids, Matrix::row_vector(numeric), noise_rng, training);
  std::vector<double> out;
  for (const auto v : result.outputs) out.push_back(tape.value(v)[0]);
  return out;
}

}  // namespace wmlff
