#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wmlff/features/pipeline.hpp"
#include "wmlff/model/model.hpp"
#include "wmlff/training/optimizer.hpp"

namespace wmlff {

enum class LossKind { joint_bce, bce, mse };
enum class StopMetric { loss, auc };

std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view s);
std::string_view to_string(StopMetric m);
StopMetric parse_stop_metric(std::string_view s);

struct EarlyStoppingConfig {
  bool enabled = false;
  std::size_t patience = 2;
  StopMetric metric = StopMetric::loss;
  bool restore_best = true;
};

struct KFoldConfig {
  bool enabled = false;
  std::size_t k = 10;
};

struct TrainConfig {
  std::size_t batch_size = 1024;
  std::size_t epochs = 40;
  OptimizerConfig optimizer;
  LossKind loss = LossKind::joint_bce;
  EarlyStoppingConfig early_stopping;
  // Held out from the training rows when no explicit validation set is given.
  double validation_fraction = 0.0;
  KFoldConfig kfold;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
};

// Checks that the loss, model layout and dataset labels agree.
void check_compatible(const ModelConfig& model, const TrainConfig& config, const EncodedDataset& data);

// Regression target as seen by the loss: the rating rescaled to [0, 1] for a
// sigmoid output, the raw rating for a linear one.
std::vector<double> regression_targets(std::span<const double> ratings, OutputKind output);

struct EpochRecord {
  std::size_t epoch = 0;     // 0 = before the first update
  double train_loss = 0.0;   // noise-free loss over all training rows
  double batch_loss = 0.0;   // size-weighted mean of the noisy mini-batch losses
  std::optional<double> validation_loss;
  std::optional<double> validation_auc;
};

struct TrainResult {
  WMLFFModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch training: seeded shuffle, noisy forward, loss, backward,
// optimizer step. With early stopping the best-validation epoch is restored.
TrainResult train(WMLFFModel model, const EncodedDataset& train_data,
                  const EncodedDataset* validation, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Noise-free per-task outputs for every row.
std::vector<std::vector<double>> predict_dataset(const WMLFFModel& model, const EncodedDataset& data,
                                                 std::size_t chunk = 4096);

double evaluate_loss(const WMLFFModel& model, const EncodedDataset& data, LossKind loss);

// Fisher-Yates with the library generator (portable across standard libraries).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

struct Ensemble {
  std::vector<WMLFFModel> members;
  std::vector<TrainResult> runs;
};

// Fold of each row: position in a seeded permutation modulo k.
std::vector<std::size_t> assign_folds(std::size_t rows, std::size_t k, std::uint64_t seed);

// Member j trains on every fold but j and early-stops on fold j.
Ensemble kfold_train(const EncodedDataset& data, std::size_t k, const ModelConfig& model_config,
                     const TrainConfig& config, const EpochCallback& on_epoch = {});

// Arithmetic mean of the member outputs.
std::vector<std::vector<double>> predict_ensemble(std::span<const WMLFFModel> members,
                                                  const EncodedDataset& data);

}  // namespace wmlff
