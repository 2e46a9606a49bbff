// wmlff: command-line front end.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wmlff/cli/commands.hpp"
#include "wmlff/errors.hpp"

namespace fs = std::filesystem;
using namespace wmlff;

namespace {

fs::path data_root() {
  const char* env = std::getenv("WMLFF_DATA_DIR");
  return env ? fs::path(env) : fs::path("data");
}

// Relative inputs missing from the working directory are looked up under WMLFF_DATA_DIR.
fs::path input_path(const std::string& p) {
  const fs::path path(p);
  if (path.is_relative() && !fs::exists(path)) {
    if (const char* env = std::getenv("WMLFF_DATA_DIR"); env && fs::exists(fs::path(env) / path)) {
      return fs::path(env) / path;
    }
  }
  return path;
}

struct ModelFlags {
  std::uint64_t seed = 0;
  std::size_t dim = 32;
  std::size_t depth = 3;
  double noise_sigma = 0.5;
  double slope = 0.01;
  std::string head = "dot";
  std::string towers = "auto";
  std::string output = "sigmoid";
  std::string tap = "post";
  std::string optimizer = "radam";
  double lr = 1e-3;
  std::optional<double> weight_decay;
  std::size_t batch = 1024;
  std::size_t epochs = 40;
  std::size_t kfold = 0;
  std::string loss = "auto";
  bool early_stopping = false;
  std::size_t patience = 2;
  std::string stop_metric = "loss";
  double validation_fraction = 0.0;
  std::vector<std::string> variants;

  void attach(CLI::App& app, bool with_variant) {
    app.add_option("--seed", seed, "Random seed")->capture_default_str();
    app.add_option("--dim", dim, "Embedding and tower width")->capture_default_str();
    app.add_option("--depth", depth, "Dense blocks per tower")->capture_default_str();
    app.add_option("--noise-sigma", noise_sigma, "Std of the multiplicative noise")->capture_default_str();
    app.add_option("--slope", slope, "Leaky ReLU negative slope")->capture_default_str();
    app.add_option("--head", head)->check(CLI::IsMember({"dot", "cosine"}))->capture_default_str();
    app.add_option("--towers", towers)
        ->check(CLI::IsMember({"auto", "dual", "independent", "single"}))
        ->capture_default_str();
    app.add_option("--output", output)->check(CLI::IsMember({"sigmoid", "linear"}))->capture_default_str();
    app.add_option("--tap", tap, "Level features after (post) or before (pre) the activation")
        ->check(CLI::IsMember({"post", "pre"}))
        ->capture_default_str();
    app.add_option("--optimizer", optimizer)
        ->check(CLI::IsMember({"adam", "adamw", "radam"}))
        ->capture_default_str();
    app.add_option("--lr", lr, "Learning rate")->capture_default_str();
    app.add_option("--weight-decay", weight_decay);
    app.add_option("--batch", batch)->capture_default_str();
    app.add_option("--epochs", epochs)->capture_default_str();
    app.add_option("--kfold", kfold, "Train a K-fold ensemble (0 = off)")->capture_default_str();
    app.add_option("--loss", loss)
        ->check(CLI::IsMember({"auto", "joint_bce", "bce", "mse"}))
        ->capture_default_str();
    app.add_flag("--early-stopping", early_stopping);
    app.add_option("--patience", patience)->capture_default_str();
    app.add_option("--stop-metric", stop_metric)->check(CLI::IsMember({"loss", "auc"}))->capture_default_str();
    app.add_option("--validation-fraction", validation_fraction)->capture_default_str();
    if (with_variant) {
      std::vector<std::string> names(std::begin(kAblationVariants), std::end(kAblationVariants));
      app.add_option("--variant", variants, "Variant(s) applied on top of the flags")
          ->check(CLI::IsMember(names));
    }
  }

  RunSettings settings() const {
    RunSettings s;
    s.model.dim = dim;
    s.model.depth = depth;
    s.model.noise_sigma = noise_sigma;
    s.model.activation_slope = slope;
    s.model.head = parse_head_kind(head);
    s.towers_auto = towers == "auto";
    if (!s.towers_auto) s.model.towers = parse_tower_layout(towers);
    s.model.output = parse_output_kind(output);
    s.model.tap = parse_tap_point(tap);
    s.train.seed = seed;
    s.train.optimizer.kind = parse_optimizer_kind(optimizer);
    s.train.optimizer.lr = lr;
    s.train.optimizer.weight_decay = weight_decay;
    s.train.batch_size = batch;
    s.train.epochs = epochs;
    if (kfold > 0) {
      s.train.kfold.enabled = true;
      s.train.kfold.k = kfold;
    }
    s.loss_auto = loss == "auto";
    if (!s.loss_auto) s.train.loss = parse_loss_kind(loss);
    s.train.early_stopping.enabled = early_stopping;
    s.train.early_stopping.patience = patience;
    s.train.early_stopping.metric = parse_stop_metric(stop_metric);
    s.train.validation_fraction = validation_fraction;
    for (const auto& v : variants) {
      apply_variant(v, s.model, s.train);
      if (v == "no-shared") s.towers_auto = false;
    }
    return s;
  }
};

struct SchemaFlags {
  std::string schema;
  bool bias_stats = false;
  std::optional<std::string> bias_std_ratio;
  std::optional<std::string> bias_user, bias_item;
  std::optional<std::size_t> threshold;
  std::optional<double> lambda;

  void attach(CLI::App& app, bool required) {
    auto* opt = app.add_option("--schema", schema, "Schema config file");
    if (required) opt->required();
    app.add_flag("--bias-stats", bias_stats, "Derive user/item rating statistics");
    app.add_option("--bias-std-ratio", bias_std_ratio)->check(CLI::IsMember({"mu_over_sigma", "sigma_over_mu"}));
    app.add_option("--bias-user", bias_user, "User column for bias statistics");
    app.add_option("--bias-item", bias_item, "Item column for bias statistics");
    app.add_option("--threshold", threshold, "Distinct values above which a categorical is high-cardinality");
    app.add_option("--lambda", lambda, "Standardization divisor multiplier");
  }

  SchemaConfig load(const std::optional<std::string>& rating_output = std::nullopt) const {
    SchemaConfig c = read_schema_config(input_path(schema));
    if (bias_stats) c.bias_stats = true;
    if (bias_std_ratio) c.bias_std_ratio = parse_bias_std_ratio(*bias_std_ratio);
    if (bias_user) c.bias_user = *bias_user;
    if (bias_item) c.bias_item = *bias_item;
    if (threshold) c.threshold = *threshold;
    if (lambda) c.lambda = *lambda;
    if (rating_output) c.rating_output_sigmoid = *rating_output == "sigmoid";
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WMLFF: train and score tower models with per-level factorization heads"};
  app.require_subcommand(1);

  // fit-schema
  auto* fit = app.add_subcommand("fit-schema", "Fit the feature pipeline on training data");
  std::string fit_data, fit_out;
  std::optional<std::string> fit_output;
  SchemaFlags fit_schema;
  fit->add_option("--data", fit_data, "Training data")->required();
  fit->add_option("--out", fit_out, "Pipeline file to write")->required();
  fit->add_option("--output", fit_output, "Model output the rating statistics are scaled for")
      ->check(CLI::IsMember({"sigmoid", "linear"}));
  fit_schema.attach(*fit, true);
  fit->set_config("--config");

  // train
  auto* tr = app.add_subcommand("train", "Encode data and train a model");
  std::string tr_data, tr_out;
  std::optional<std::string> tr_pipeline, tr_validation, tr_metrics, tr_history;
  SchemaFlags tr_schema;
  ModelFlags tr_flags;
  bool quiet = false;
  tr->add_option("--data", tr_data, "Training data")->required();
  tr->add_option("--pipeline", tr_pipeline, "Fitted pipeline (else --schema is fitted on --data)");
  tr->add_option("--validation", tr_validation, "Validation data");
  tr->add_option("--out", tr_out, "Model container (ensemble manifest with --kfold)")->required();
  tr->add_option("--metrics", tr_metrics, "Write the final report here");
  tr->add_option("--history", tr_history, "Write the per-epoch table here");
  tr->add_flag("--quiet", quiet, "No per-epoch log");
  tr_schema.attach(*tr, false);
  tr_flags.attach(*tr, true);
  tr->set_config("--config");

  // predict
  auto* pr = app.add_subcommand("predict", "Write per-row predictions");
  std::string pr_model, pr_data, pr_out;
  pr->add_option("--model", pr_model, "Container or ensemble manifest")->required();
  pr->add_option("--data", pr_data)->required();
  pr->add_option("--out", pr_out)->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score predictions against labels");
  EvaluateRequest ev_req;
  std::string ev_pred, ev_labels, ev_mode = "auto";
  std::optional<std::string> ev_out;
  ev->add_option("--predictions", ev_pred)->required();
  ev->add_option("--labels", ev_labels, "Delimited file holding the label columns")->required();
  ev->add_option("--mode", ev_mode)->check(CLI::IsMember({"auto", "binary", "regression"}))->capture_default_str();
  ev->add_option("--click-col", ev_req.click_column)->capture_default_str();
  ev->add_option("--install-col", ev_req.install_column)->capture_default_str();
  ev->add_option("--rating-col", ev_req.rating_column)->capture_default_str();
  ev->add_option("--out", ev_out, "Also write the report here");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the variant suite and tabulate test metrics");
  std::string ab_data, ab_out;
  std::optional<std::string> ab_test;
  double ab_holdout = 0.2;
  std::vector<std::string> ab_variants(std::begin(kAblationVariants), std::end(kAblationVariants));
  SchemaFlags ab_schema;
  ModelFlags ab_flags;
  ab->add_option("--data", ab_data)->required();
  ab->add_option("--test", ab_test, "Test data (else a seeded holdout of --data)");
  ab->add_option("--holdout", ab_holdout)->capture_default_str();
  ab->add_option("--variants", ab_variants)
      ->check(CLI::IsMember(std::vector<std::string>(std::begin(kAblationVariants), std::end(kAblationVariants))));
  ab->add_option("--out", ab_out, "Report table")->required();
  ab_schema.attach(*ab, true);
  ab_flags.attach(*ab, false);
  ab->set_config("--config");

  // generate
  auto* gen = app.add_subcommand("generate", "Write a planted-teacher synthetic dataset");
  PlantedSpec spec;
  std::string gen_out;
  std::size_t gen_test = 0;
  std::string teacher_towers = "dual", teacher_head = "dot";
  std::optional<double> teacher_scale;
  bool no_label_noise = false;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--rows", spec.n_rows)->capture_default_str();
  gen->add_option("--test-rows", gen_test, "Extra rows written to test.csv")->capture_default_str();
  gen->add_option("--cardinalities", spec.cardinalities)->capture_default_str();
  gen->add_option("--numeric", spec.n_numeric)->capture_default_str();
  gen->add_option("--teacher-dim", spec.teacher.dim)->capture_default_str();
  gen->add_option("--teacher-depth", spec.teacher.depth)->capture_default_str();
  gen->add_option("--teacher-towers", teacher_towers)->check(CLI::IsMember({"dual", "independent", "single"}));
  gen->add_option("--teacher-head", teacher_head)->check(CLI::IsMember({"dot", "cosine"}));
  gen->add_option("--teacher-scale", teacher_scale, "Global scale m of the teacher");
  gen->add_option("--logit-std", spec.target_logit_std, "Calibrated teacher logit spread")->capture_default_str();
  gen->add_flag("--no-label-noise", no_label_noise, "Threshold p* instead of sampling");
  gen->add_option("--seed", spec.seed)->capture_default_str();

  // adapt-movielens
  auto* ml = app.add_subcommand("adapt-movielens", "Convert MovieLens-100k to training/test files");
  std::optional<std::string> ml_raw;
  std::string ml_out, ml_split = "u1", ml_ratio = "mu_over_sigma";
  bool ml_bias = false;
  ml->add_option("--raw", ml_raw, "ml-100k directory (default $WMLFF_DATA_DIR/ml-100k)");
  ml->add_option("--out", ml_out)->required();
  ml->add_option("--split", ml_split)->check(CLI::IsMember({"u1", "u2", "u3", "u4", "u5"}))->capture_default_str();
  ml->add_flag("--bias-stats", ml_bias, "Append user/item rating statistics");
  ml->add_option("--bias-std-ratio", ml_ratio)->check(CLI::IsMember({"mu_over_sigma", "sigma_over_mu"}));

  // adapt-criteo
  auto* cr = app.add_subcommand("adapt-criteo", "Seeded subsample of a Criteo TSV");
  std::string cr_raw, cr_out;
  double cr_fraction = 0.01;
  std::uint64_t cr_seed = 0;
  cr->add_option("--raw", cr_raw)->required();
  cr->add_option("--out", cr_out)->required();
  cr->add_option("--fraction", cr_fraction)->capture_default_str();
  cr->add_option("--seed", cr_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fit) {
      const auto p = cmd_fit_schema(input_path(fit_data), fit_schema.load(fit_output), fit_out);
      for (const auto& w : p.warnings()) std::cerr << "warning: " << w << "\n";
    } else if (*tr) {
      TrainRequest req;
      req.data = input_path(tr_data);
      if (tr_pipeline) {
        req.pipeline = input_path(*tr_pipeline);
      } else if (!tr_schema.schema.empty()) {
        req.schema = tr_schema.load(tr_flags.output);
      } else {
        throw UsageError("train needs --pipeline or --schema");
      }
      if (tr_validation) req.validation = input_path(*tr_validation);
      req.out = tr_out;
      if (tr_metrics) req.metrics = *tr_metrics;
      if (tr_history) req.history = *tr_history;
      req.settings = tr_flags.settings();
      req.log = quiet ? nullptr : &std::cout;
      const auto outcome = cmd_train(req);
      std::cout << outcome.report.to_key_value();
    } else if (*pr) {
      cmd_predict(input_path(pr_model), input_path(pr_data), pr_out);
    } else if (*ev) {
      ev_req.predictions = input_path(ev_pred);
      ev_req.labels = input_path(ev_labels);
      ev_req.mode = parse_eval_mode(ev_mode);
      const auto report = cmd_evaluate(ev_req);
      std::cout << report.to_key_value();
      if (ev_out) {
        std::ofstream out(*ev_out, std::ios::binary);
        out << report.to_key_value();
      }
    } else if (*ab) {
      AblateRequest req;
      req.data = input_path(ab_data);
      if (ab_test) req.test = input_path(*ab_test);
      req.holdout_fraction = ab_holdout;
      req.schema = ab_schema.load(ab_flags.output);
      req.settings = ab_flags.settings();
      req.variants = ab_variants;
      req.out = ab_out;
      req.log = &std::cerr;
      for (const auto& row : cmd_ablate(req)) {
        std::cout << row.variant << " " << row.report.config_hash;
        for (const auto& [k, v] : row.report.values) std::cout << " " << k << "=" << format_double(v);
        std::cout << "\n";
      }
    } else if (*gen) {
      spec.teacher.towers = parse_tower_layout(teacher_towers);
      spec.teacher.head = parse_head_kind(teacher_head);
      spec.teacher_global_scale = teacher_scale;
      spec.label_noise = !no_label_noise;
      cmd_generate(spec, gen_test, gen_out);
    } else if (*ml) {
      cmd_adapt_movielens(ml_raw ? fs::path(*ml_raw) : data_root() / "ml-100k", ml_out, ml_split, ml_bias,
                          parse_bias_std_ratio(ml_ratio));
    } else if (*cr) {
      std::cout << "rows=" << cmd_adapt_criteo(input_path(cr_raw), cr_out, cr_fraction, cr_seed) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for_current_exception();
  }
  return kExitOk;
}
