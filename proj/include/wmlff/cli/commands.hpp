#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wmlff/datagen/planted.hpp"
#include "wmlff/eval/metrics.hpp"
#include "wmlff/features/pipeline.hpp"
#include "wmlff/model/config.hpp"
#include "wmlff/training/trainer.hpp"

namespace wmlff {

// Exit codes of the wmlff binary.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// Maps the exception currently being handled to an exit code.
int exit_code_for_current_exception();

// Named variants of the ablation suite, in report order.
inline constexpr std::string_view kAblationVariants[] = {
    "original", "sigma-0.3", "adamw", "no-shared", "cosine", "kfold", "depth-6", "dim-64"};

// Applies one variant on top of the given configs. Throws UsageError for an unknown name.
void apply_variant(std::string_view variant, ModelConfig& model, TrainConfig& train);

// Settings left open until the data is known.
struct RunSettings {
  ModelConfig model;
  TrainConfig train;
  bool towers_auto = true;  // dual for two binary labels, single otherwise
  bool loss_auto = true;    // joint_bce, bce or mse to match the layout and labels
};

// Fills cardinalities / n_numeric and resolves the automatic choices.
RunSettings resolve_settings(RunSettings settings, const FeaturePipeline& pipeline,
                             const EncodedDataset& data);

std::string run_config_hash(const ModelConfig& model, const TrainConfig& train);

FeaturePipeline cmd_fit_schema(const std::filesystem::path& data, const SchemaConfig& schema,
                               const std::filesystem::path& out);

void save_pipeline(const std::filesystem::path& path, const FeaturePipeline& pipeline);
FeaturePipeline load_pipeline(const std::filesystem::path& path);

struct TrainRequest {
  std::filesystem::path data;
  std::optional<std::filesystem::path> pipeline;  // fitted pipeline file
  std::optional<SchemaConfig> schema;             // fitted on `data` when no pipeline is given
  std::optional<std::filesystem::path> validation;
  std::filesystem::path out;                      // container, or manifest for k-fold
  std::optional<std::filesystem::path> metrics;   // key=value report
  std::optional<std::filesystem::path> history;   // per-epoch table
  RunSettings settings;
  std::ostream* log = nullptr;
};

struct TrainOutcome {
  MetricsReport report;
  std::vector<MetricsReport> epochs;
  std::vector<std::filesystem::path> written;
  RunSettings settings;
};

TrainOutcome cmd_train(const TrainRequest& request);

struct Predictions {
  std::vector<std::string> columns;           // p_click / p_install, or rating
  std::vector<std::vector<double>> values;    // per column
};

Predictions predict_table(const std::filesystem::path& model, const Table& rows);

// Writes row_id plus one column per task; returns the row count.
std::size_t cmd_predict(const std::filesystem::path& model, const std::filesystem::path& data,
                        const std::filesystem::path& out);

enum class EvalMode { auto_detect, binary, regression };
EvalMode parse_eval_mode(std::string_view s);

struct EvaluateRequest {
  std::filesystem::path predictions;
  std::filesystem::path labels;
  EvalMode mode = EvalMode::auto_detect;
  std::string click_column = "is_clicked";
  std::string install_column = "is_installed";
  std::string rating_column = "rating";
};

MetricsReport cmd_evaluate(const EvaluateRequest& request);

// Scores in-memory predictions against a labels table (same rules as cmd_evaluate).
MetricsReport evaluate_predictions(const Predictions& predictions, const Table& labels,
                                   const EvaluateRequest& request);

struct AblateRequest {
  std::filesystem::path data;
  std::optional<std::filesystem::path> test;  // held out from data when absent
  double holdout_fraction = 0.2;
  SchemaConfig schema;
  RunSettings settings;
  std::vector<std::string> variants{std::begin(kAblationVariants), std::end(kAblationVariants)};
  std::optional<std::filesystem::path> out;   // report table
  std::ostream* log = nullptr;
};

struct AblationRow {
  std::string variant;
  RunSettings settings;
  MetricsReport report;
  std::size_t tower_count = 0;
  std::vector<WMLFFModel> members;  // one model, or the k-fold ensemble
};

std::vector<AblationRow> cmd_ablate(const AblateRequest& request);

// Writes data.csv (first n_rows), test.csv (remaining test_rows), p_star.csv
// and schema.cfg. Returns the generated data over all rows.
PlantedData cmd_generate(PlantedSpec spec, std::size_t test_rows, const std::filesystem::path& out);

void cmd_adapt_movielens(const std::filesystem::path& raw_dir, const std::filesystem::path& out,
                         std::string_view split, bool bias_stats, BiasStdRatio ratio);

// Seeded subsample of a Criteo-style TSV (label, 13 integer, 26 categorical
// columns, no header) into a headed CSV plus schema.cfg.
std::size_t cmd_adapt_criteo(const std::filesystem::path& raw, const std::filesystem::path& out_dir,
                             double fraction, std::uint64_t seed);

}  // namespace wmlff
