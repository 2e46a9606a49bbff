#include "wmlff/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "wmlff/errors.hpp"
#include "wmlff/eval/metrics.hpp"
#include "wmlff/features/bias_stats.hpp"

namespace wmlff {

namespace {

struct TaskLabels {
  std::vector<const std::vector<double>*> binary;  // per task, for bce losses
  std::vector<double> regression;                  // transformed targets for mse
};

const std::vector<double>& single_binary_label(const EncodedDataset& d) {
  if (d.click) return *d.click;
  if (d.install) return *d.install;
  throw UsageError("binary loss needs a click or install label");
}

TaskLabels task_labels(const ModelConfig& model, LossKind loss, const EncodedDataset& d) {
  TaskLabels t;
  switch (loss) {
    case LossKind::joint_bce:
      if (!d.click || !d.install) throw UsageError("joint loss needs click and install labels");
      t.binary = {&*d.click, &*d.install};
      break;
    case LossKind::bce:
      t.binary = {&single_binary_label(d)};
      break;
    case LossKind::mse:
      if (!d.rating) throw UsageError("mse loss needs a rating label");
      t.regression = regression_targets(*d.rating, model.output);
      break;
  }
  return t;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& src, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (const auto i : idx) out.push_back(src[i]);
  return out;
}

Var batch_loss(Tape& tape, const ForwardResult& fwd, LossKind loss, const TaskLabels& labels,
               std::span<const std::size_t> rows) {
  switch (loss) {
    case LossKind::joint_bce: {
      const auto c = gather(*labels.binary[0], rows);
      const auto i = gather(*labels.binary[1], rows);
      Var lc = tape.bce_logits_mean(fwd.logits[0], c, kProbabilityEps);
      Var li = tape.bce_logits_mean(fwd.logits[1], i, kProbabilityEps);
      return tape.scale_const(tape.add(lc, li), 0.5);
    }
    case LossKind::bce:
      return tape.bce_logits_mean(fwd.logits[0], gather(*labels.binary[0], rows), kProbabilityEps);
    case LossKind::mse:
      return tape.mse_mean(fwd.outputs[0], gather(labels.regression, rows));
  }
  throw UsageError("unknown loss");
}

struct BatchInput {
  std::vector<std::int32_t> ids;
  Matrix numeric;
};

BatchInput gather_inputs(const EncodedDataset& d, std::span<const std::size_t> rows) {
  BatchInput b;
  b.ids.reserve(rows.size() * d.n_categorical);
  b.numeric = Matrix(rows.size(), d.n_numeric());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto cr = d.categorical_row(rows[k]);
    b.ids.insert(b.ids.end(), cr.begin(), cr.end());
    const auto nr = d.numeric.row(rows[k]);
    std::copy(nr.begin(), nr.end(), b.numeric.row(k).begin());
  }
  return b;
}

std::string parameter_norms(const ParameterSet& params) {
  std::ostringstream out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double ss = 0.0;
    for (const double v : params[i].value.values()) ss += v * v;
    out << (i ? ", " : "") << params[i].name << "=" << std::sqrt(ss);
  }
  return out.str();
}

// Empty when some task has a single class in the validation rows.
std::optional<double> mean_auc(const WMLFFModel& model, const EncodedDataset& d, LossKind loss) {
  const auto preds = predict_dataset(model, d);
  const auto labels = task_labels(model.config(), loss, d);
  double acc = 0.0;
  for (std::size_t t = 0; t < labels.binary.size(); ++t) {
    const auto& y = *labels.binary[t];
    if (std::adjacent_find(y.begin(), y.end(), std::not_equal_to<>()) == y.end()) return std::nullopt;
    acc += auc(preds[t], y);
  }
  return acc / static_cast<double>(labels.binary.size());
}

}  // namespace

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::joint_bce: return "joint_bce";
    case LossKind::bce: return "bce";
    case LossKind::mse: return "mse";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "joint_bce") return LossKind::joint_bce;
  if (s == "bce") return LossKind::bce;
  if (s == "mse") return LossKind::mse;
  throw UsageError("loss must be joint_bce, bce or mse, got '" + std::string(s) + "'");
}

std::string_view to_string(StopMetric m) { return m == StopMetric::loss ? "loss" : "auc"; }

StopMetric parse_stop_metric(std::string_view s) {
  if (s == "loss") return StopMetric::loss;
  if (s == "auc") return StopMetric::auc;
  throw UsageError("early-stopping metric must be loss or auc, got '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (kfold.enabled && kfold.k < 2) throw UsageError("k-fold needs k >= 2");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw UsageError("validation fraction must lie in [0, 1)");
  }
  if (!(optimizer.lr >= 0.0)) throw UsageError("learning rate must be non-negative");
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["optimizer"] = to_string(optimizer.kind);
  j["lr"] = optimizer.lr;
  j["beta1"] = optimizer.beta1;
  j["beta2"] = optimizer.beta2;
  j["eps"] = optimizer.eps;
  j["weight_decay"] = optimizer.effective_weight_decay();
  j["loss"] = to_string(loss);
  j["early_stopping"] = early_stopping.enabled;
  j["patience"] = early_stopping.patience;
  j["stop_metric"] = to_string(early_stopping.metric);
  j["restore_best"] = early_stopping.restore_best;
  j["validation_fraction"] = validation_fraction;
  j["kfold"] = kfold.enabled ? kfold.k : 0;
  j["seed"] = seed;
  return j.dump();
}

void check_compatible(const ModelConfig& model, const TrainConfig& config, const EncodedDataset& data) {
  const bool two_tasks = model.task_count() == 2;
  if (config.loss == LossKind::joint_bce && !two_tasks) {
    throw UsageError("joint_bce loss needs a two-task tower layout (dual or independent)");
  }
  if (config.loss != LossKind::joint_bce && two_tasks) {
    throw UsageError(std::string(to_string(config.loss)) + " loss needs the single tower layout");
  }
  if (config.loss != LossKind::mse && model.output != OutputKind::sigmoid) {
    throw UsageError("binary losses need a sigmoid output");
  }
  if (data.n_numeric() != model.n_numeric || data.cardinalities != model.cardinalities) {
    throw UsageError("dataset layout does not match the model configuration");
  }
  task_labels(model, config.loss, data);
}

std::vector<double> regression_targets(std::span<const double> ratings, OutputKind output) {
  std::vector<double> out(ratings.begin(), ratings.end());
  if (output == OutputKind::sigmoid) {
    for (auto& r : out) r = rescale_rating(r);
  }
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::vector<std::vector<double>> predict_dataset(const WMLFFModel& model, const EncodedDataset& data,
                                                 std::size_t chunk) {
  std::vector<std::vector<double>> out(model.config().task_count());
  for (auto& o : out) o.reserve(data.rows);
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.rows; start += chunk) {
    const std::size_t end = std::min(data.rows, start + chunk);
    rows.resize(end - start);
    std::iota(rows.begin(), rows.end(), start);
    const auto in = gather_inputs(data, rows);
    Tape tape(false);
    const auto fwd = model.forward(tape, in.ids, in.numeric, nullptr, false);
    for (std::size_t t = 0; t < out.size(); ++t) {
      const auto v = tape.value(fwd.outputs[t]).values();
      out[t].insert(out[t].end(), v.begin(), v.end());
    }
  }
  return out;
}

double evaluate_loss(const WMLFFModel& model, const EncodedDataset& data, LossKind loss) {
  const auto preds = predict_dataset(model, data);
  const auto labels = task_labels(model.config(), loss, data);
  switch (loss) {
    case LossKind::joint_bce:
      return joint_bce_loss(*labels.binary[0], preds[0], *labels.binary[1], preds[1]);
    case LossKind::bce:
      return bce_loss(*labels.binary[0], preds[0]);
    case LossKind::mse:
      return mse_loss(labels.regression, preds[0]);
  }
  throw UsageError("unknown loss");
}

TrainResult train(WMLFFModel model, const EncodedDataset& train_data,
                  const EncodedDataset* validation, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_data.rows == 0) throw DataError("training set is empty");

  // Optional held-out split taken from the training rows.
  EncodedDataset held_train, held_valid;
  const EncodedDataset* fit_data = &train_data;
  if (!validation && config.validation_fraction > 0.0) {
    const auto perm = shuffled_indices(train_data.rows, derive_seed(config.seed, 4));
    const auto n_valid = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                      std::llround(config.validation_fraction * double(train_data.rows))));
    if (n_valid >= train_data.rows) throw DataError("validation split leaves no training rows");
    held_valid = train_data.subset(std::span(perm).first(n_valid));
    held_train = train_data.subset(std::span(perm).subspan(n_valid));
    fit_data = &held_train;
    validation = &held_valid;
  }
  check_compatible(model.config(), config, *fit_data);
  if (validation) check_compatible(model.config(), config, *validation);
  if (config.early_stopping.enabled && !validation) {
    throw UsageError("early stopping needs validation data");
  }

  const auto labels = task_labels(model.config(), config.loss, *fit_data);
  Optimizer optimizer(config.optimizer, model.parameters());
  Rng shuffle_rng(derive_seed(config.seed, 1));
  Rng noise_rng(derive_seed(config.seed, 2));

  TrainResult result{model, {}, 0};
  auto record = [&](std::size_t epoch, double batch_loss) {
    EpochRecord r;
    r.epoch = epoch;
    r.batch_loss = batch_loss;
    r.train_loss = evaluate_loss(model, *fit_data, config.loss);
    if (validation) {
      r.validation_loss = evaluate_loss(model, *validation, config.loss);
      if (config.loss != LossKind::mse) r.validation_auc = mean_auc(model, *validation, config.loss);
    }
    result.history.push_back(r);
    if (on_epoch) on_epoch(r);
    return r;
  };
  auto score = [&](const EpochRecord& r) {
    // Higher is better.
    if (config.early_stopping.metric == StopMetric::auc && r.validation_auc) return *r.validation_auc;
    return -r.validation_loss.value_or(-r.train_loss);
  };

  const auto initial = record(0, std::nan(""));
  double best_score = score(initial);
  std::size_t since_best = 0;
  WMLFFModel best = model;

  std::vector<std::size_t> order(fit_data->rows);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_index(i))]);
    }
    double weighted = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const auto rows = std::span(order).subspan(start, std::min(config.batch_size, order.size() - start));
      const auto in = gather_inputs(*fit_data, rows);
      Tape tape(true);
      const auto fwd = model.forward(tape, in.ids, in.numeric, &noise_rng, true);
      const Var loss = batch_loss(tape, fwd, config.loss, labels, rows);
      const double lv = tape.value(loss)[0];
      if (!std::isfinite(lv)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + "; parameter norms: " +
                             parameter_norms(model.parameters()));
      }
      const auto grads = tape.backward(loss, model.parameters());
      for (std::size_t p = 0; p < grads.size(); ++p) {
        for (const double g : grads[p].values()) {
          if (!std::isfinite(g)) {
            throw NumericalError("non-finite gradient for " + model.parameters()[p].name +
                                 " at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_index) + "; parameter norms: " +
                                 parameter_norms(model.parameters()));
          }
        }
      }
      optimizer.step(model.parameters(), grads);
      weighted += lv * static_cast<double>(rows.size());
    }
    const auto r = record(epoch, weighted / static_cast<double>(order.size()));
    const double s = score(r);
    if (s > best_score || !config.early_stopping.enabled) {
      if (s > best_score) {
        best_score = s;
        result.best_epoch = epoch;
      }
      since_best = 0;
      if (config.early_stopping.enabled) best = model;
    } else if (++since_best >= config.early_stopping.patience) {
      break;
    }
  }
  if (config.early_stopping.enabled && config.early_stopping.restore_best) {
    result.model = std::move(best);
  } else {
    result.model = std::move(model);
    if (!config.early_stopping.enabled) result.best_epoch = result.history.back().epoch;
  }
  return result;
}

std::vector<std::size_t> assign_folds(std::size_t rows, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw UsageError("k-fold needs k >= 2");
  if (k > rows) {
    throw DataError("k-fold with k = " + std::to_string(k) + " needs at least k rows, got " +
                    std::to_string(rows));
  }
  const auto perm = shuffled_indices(rows, seed);
  std::vector<std::size_t> fold(rows);
  for (std::size_t pos = 0; pos < rows; ++pos) fold[perm[pos]] = pos % k;
  return fold;
}

Ensemble kfold_train(const EncodedDataset& data, std::size_t k, const ModelConfig& model_config,
                     const TrainConfig& config, const EpochCallback& on_epoch) {
  const auto fold = assign_folds(data.rows, k, derive_seed(config.seed, 3));
  Ensemble ens;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<std::size_t> fit_rows, valid_rows;
    for (std::size_t r = 0; r < data.rows; ++r) (fold[r] == j ? valid_rows : fit_rows).push_back(r);
    const auto fit_data = data.subset(fit_rows);
    const auto valid_data = data.subset(valid_rows);
    TrainConfig member = config;
    member.seed = config.seed + j;
    member.kfold.enabled = false;
    member.validation_fraction = 0.0;
    member.early_stopping.enabled = true;
    Rng init_rng(derive_seed(member.seed, 0));
    auto run = train(WMLFFModel::init(model_config, init_rng), fit_data, &valid_data, member, on_epoch);
    ens.members.push_back(run.model);
    ens.runs.push_back(std::move(run));
  }
  return ens;
}

std::vector<std::vector<double>> predict_ensemble(std::span<const WMLFFModel> members,
                                                  const EncodedDataset& data) {
  if (members.empty()) throw UsageError("ensemble has no members");
  // reference + mean deviation: identical members reproduce the reference exactly.
  const auto ref = predict_dataset(members.front(), data);
  std::vector<std::vector<double>> dev(ref.size());
  for (std::size_t t = 0; t < ref.size(); ++t) dev[t].assign(ref[t].size(), 0.0);
  for (std::size_t m = 1; m < members.size(); ++m) {
    const auto p = predict_dataset(members[m], data);
    if (p.size() != ref.size()) throw UsageError("ensemble members disagree on task count");
    for (std::size_t t = 0; t < ref.size(); ++t) {
      for (std::size_t r = 0; r < ref[t].size(); ++r) dev[t][r] += p[t][r] - ref[t][r];
    }
  }
  auto acc = ref;
  const double n = static_cast<double>(members.size());
  for (std::size_t t = 0; t < acc.size(); ++t) {
    for (std::size_t r = 0; r < acc[t].size(); ++r) acc[t][r] += dev[t][r] / n;
  }
  return acc;
}

}  // namespace wmlff
