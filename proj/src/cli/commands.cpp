#include "wmlff/cli/commands.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "wmlff/cli/container.hpp"
#include "wmlff/cli/movielens.hpp"
#include "wmlff/errors.hpp"
#include "wmlff/training/losses.hpp"

namespace wmlff {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Table read_table(const std::filesystem::path& path, char delimiter = '\0') {
  return read_delimited(path, delimiter);
}

Table select_rows(const Table& t, std::span<const std::size_t> rows) {
  Table out;
  for (std::size_t c = 0; c < t.column_count(); ++c) {
    std::vector<std::string> cells;
    cells.reserve(rows.size());
    for (const auto r : rows) cells.push_back(t.columns[c][r]);
    out.add_column(t.names[c], std::move(cells));
  }
  return out;
}

bool is_regression(const FeaturePipeline& p) {
  return p.label_column(ColumnRole::label_rating) && !p.label_column(ColumnRole::label_click) &&
         !p.label_column(ColumnRole::label_install);
}

std::vector<std::string> output_columns(const FeaturePipeline& p, const ModelConfig& model) {
  if (model.task_count() == 2) return {"p_click", "p_install"};
  if (is_regression(p)) return {"rating"};
  if (p.label_column(ColumnRole::label_click)) return {"p_click"};
  return {"p_install"};
}

Predictions to_predictions(const FeaturePipeline& p, const ModelConfig& model,
                           std::vector<std::vector<double>> outputs) {
  Predictions pred{output_columns(p, model), std::move(outputs)};
  if (pred.columns.front() == "rating" && model.output == OutputKind::sigmoid) {
    for (auto& v : pred.values.front()) v = unscale_rating(v);
  }
  return pred;
}

void log_line(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

std::string epoch_line(const EpochRecord& e) {
  std::ostringstream s;
  s << "epoch " << e.epoch << " train_loss=" << format_double(e.train_loss);
  if (e.epoch > 0) s << " batch_loss=" << format_double(e.batch_loss);
  if (e.validation_loss) s << " validation_loss=" << format_double(*e.validation_loss);
  if (e.validation_auc) s << " validation_auc=" << format_double(*e.validation_auc);
  return s.str();
}

MetricsReport epoch_report(const EpochRecord& e, const std::string& hash) {
  MetricsReport r;
  r.dataset = std::to_string(e.epoch);
  r.config_hash = hash;
  r.add("train_loss", e.train_loss);
  if (e.epoch > 0) r.add("batch_loss", e.batch_loss);
  if (e.validation_loss) r.add("validation_loss", *e.validation_loss);
  if (e.validation_auc) r.add("validation_auc", *e.validation_auc);
  return r;
}

// Test-set metrics straight from encoded labels.
void score_outputs(MetricsReport& report, const Predictions& pred, const EncodedDataset& data,
                   std::string_view prefix = "") {
  const std::string pre(prefix);
  for (std::size_t t = 0; t < pred.columns.size(); ++t) {
    const auto& col = pred.columns[t];
    if (col == "rating") {
      if (!data.rating) throw DataError("evaluation data has no rating label");
      report.add(pre + "rmse", rmse(pred.values[t], *data.rating));
      continue;
    }
    const auto& labels = col == "p_click" ? data.click : data.install;
    if (!labels) throw DataError("evaluation data has no label for " + col);
    const std::string task = col.substr(2);
    report.add(pre + task + ".logloss", log_loss(pred.values[t], *labels));
    report.add(pre + task + ".nce", normalized_cross_entropy(pred.values[t], *labels));
    report.add(pre + task + ".auc", auc(pred.values[t], *labels));
  }
}

}  // namespace

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const NumericalError&) {
    return kExitNumerical;
  } catch (const UsageError&) {
    return kExitUsage;
  } catch (const std::logic_error&) {
    return kExitUsage;
  } catch (...) {
    return kExitData;
  }
}

void apply_variant(std::string_view variant, ModelConfig& model, TrainConfig& train) {
  if (variant == "original") {
  } else if (variant == "sigma-0.3") {
    model.noise_sigma = 0.3;
  } else if (variant == "adamw") {
    train.optimizer.kind = OptimizerKind::adamw;
  } else if (variant == "no-shared") {
    if (model.towers != TowerLayout::dual) throw UsageError("no-shared needs the dual tower layout");
    model.towers = TowerLayout::independent;
  } else if (variant == "cosine") {
    model.head = HeadKind::cosine;
  } else if (variant == "kfold") {
    train.kfold.enabled = true;
  } else if (variant == "depth-6") {
    model.depth = 6;
  } else if (variant == "dim-64") {
    model.dim = 64;
  } else {
    throw UsageError("unknown variant '" + std::string(variant) + "'");
  }
}

RunSettings resolve_settings(RunSettings s, const FeaturePipeline& pipeline, const EncodedDataset& data) {
  s.model.cardinalities = pipeline.cardinalities();
  s.model.n_numeric = data.n_numeric();
  const bool two_binary = data.click.has_value() && data.install.has_value();
  if (s.towers_auto) {
    s.model.towers = two_binary ? TowerLayout::dual : TowerLayout::single;
    s.towers_auto = false;
  }
  if (s.loss_auto) {
    if (s.model.task_count() == 2) {
      s.train.loss = LossKind::joint_bce;
    } else if (data.click || data.install) {
      s.train.loss = LossKind::bce;
    } else {
      s.train.loss = LossKind::mse;
    }
    s.loss_auto = false;
  }
  s.model.validate();
  s.train.validate();
  check_compatible(s.model, s.train, data);
  return s;
}

std::string run_config_hash(const ModelConfig& model, const TrainConfig& train) {
  return config_hash(model.to_json() + "\n" + train.to_json());
}

void save_pipeline(const std::filesystem::path& path, const FeaturePipeline& pipeline) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << pipeline.to_json() << "\n";
}

FeaturePipeline load_pipeline(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return FeaturePipeline::from_json(text);
}

FeaturePipeline cmd_fit_schema(const std::filesystem::path& data, const SchemaConfig& schema,
                               const std::filesystem::path& out) {
  FeaturePipeline pipeline(schema);
  pipeline.encode(read_table(data, schema.delimiter), EncodeMode::fit);
  save_pipeline(out, pipeline);
  return pipeline;
}

TrainOutcome cmd_train(const TrainRequest& req) {
  const auto start = Clock::now();
  FeaturePipeline pipeline;
  EncodedDataset data;
  if (req.pipeline) {
    pipeline = load_pipeline(*req.pipeline);
    data = pipeline.transform(read_table(req.data, pipeline.config().delimiter));
  } else if (req.schema) {
    pipeline = FeaturePipeline(*req.schema);
    data = pipeline.encode(read_table(req.data, req.schema->delimiter), EncodeMode::fit);
  } else {
    throw UsageError("train needs a fitted pipeline or a schema config");
  }
  for (const auto& w : pipeline.warnings()) log_line(req.log, "warning: " + w);
  std::optional<EncodedDataset> validation;
  if (req.validation) validation = pipeline.transform(read_table(*req.validation, pipeline.config().delimiter));

  TrainOutcome outcome;
  outcome.settings = resolve_settings(req.settings, pipeline, data);
  const auto& mc = outcome.settings.model;
  const auto& tc = outcome.settings.train;
  const std::string hash = run_config_hash(mc, tc);
  const Provenance prov{tc.seed, hash, tc.to_json()};
  auto on_epoch = [&](const EpochRecord& e) {
    log_line(req.log, epoch_line(e));
    outcome.epochs.push_back(epoch_report(e, hash));
  };

  MetricsReport& report = outcome.report;
  report.dataset = req.data.filename().string();
  report.config_hash = hash;
  if (req.out.has_parent_path()) std::filesystem::create_directories(req.out.parent_path());

  if (tc.kfold.enabled) {
    auto ens = kfold_train(data, tc.kfold.k, mc, tc, on_epoch);
    std::vector<std::string> names;
    const std::string stem = req.out.stem().string();
    double best_sum = 0.0;
    for (std::size_t j = 0; j < ens.members.size(); ++j) {
      auto& m = ens.members[j];
      m.round_to_float();
      const std::string name = stem + ".member" + std::to_string(j) + ".wmlff";
      const auto path = req.out.parent_path() / name;
      Provenance mp = prov;
      mp.seed = tc.seed + j;
      save_container(path, {pipeline, m, mp});
      outcome.written.push_back(path);
      names.push_back(name);
      const auto& run = ens.runs[j];
      best_sum += run.history[run.best_epoch].validation_loss.value_or(0.0);
    }
    save_ensemble_manifest(req.out, names, prov);
    outcome.written.push_back(req.out);
    report.add("members", static_cast<double>(ens.members.size()));
    report.add("mean_best_validation_loss", best_sum / static_cast<double>(ens.members.size()));
    const auto pred = to_predictions(pipeline, mc, predict_ensemble(ens.members, data));
    score_outputs(report, pred, data, "train.");
    if (validation) {
      score_outputs(report, to_predictions(pipeline, mc, predict_ensemble(ens.members, *validation)),
                    *validation, "validation.");
    }
  } else {
    Rng init_rng(derive_seed(tc.seed, 0));
    auto run = train(WMLFFModel::init(mc, init_rng), data, validation ? &*validation : nullptr, tc, on_epoch);
    run.model.round_to_float();
    save_container(req.out, {pipeline, run.model, prov});
    outcome.written.push_back(req.out);
    report.add("epochs", static_cast<double>(run.history.size() - 1));
    report.add("best_epoch", static_cast<double>(run.best_epoch));
    report.add("train_loss", evaluate_loss(run.model, data, tc.loss));
    score_outputs(report, to_predictions(pipeline, mc, predict_dataset(run.model, data)), data, "train.");
    if (validation) {
      report.add("validation_loss", evaluate_loss(run.model, *validation, tc.loss));
      score_outputs(report, to_predictions(pipeline, mc, predict_dataset(run.model, *validation)),
                    *validation, "validation.");
    }
  }
  report.wall_clock_seconds = seconds_since(start);
  if (req.metrics) {
    std::ofstream out(*req.metrics, std::ios::binary);
    if (!out) throw DataError("cannot write '" + req.metrics->string() + "'");
    out << report.to_key_value();
  }
  if (req.history) write_metrics_table(*req.history, outcome.epochs, "epoch");
  return outcome;
}

Predictions predict_table(const std::filesystem::path& model, const Table& rows) {
  const auto loaded = load_models(model);
  const auto data = loaded.pipeline.transform(rows);
  return to_predictions(loaded.pipeline, loaded.members.front().config(),
                        predict_ensemble(loaded.members, data));
}

std::size_t cmd_predict(const std::filesystem::path& model, const std::filesystem::path& data,
                        const std::filesystem::path& out) {
  const auto pred = predict_table(model, read_table(data));
  std::ofstream o(out, std::ios::binary);
  if (!o) throw DataError("cannot write '" + out.string() + "'");
  o << "row_id";
  for (const auto& c : pred.columns) o << ',' << c;
  o << '\n';
  const std::size_t n = pred.values.front().size();
  for (std::size_t r = 0; r < n; ++r) {
    o << r;
    for (const auto& col : pred.values) o << ',' << format_double(col[r]);
    o << '\n';
  }
  if (!o) throw DataError("failed writing '" + out.string() + "'");
  return n;
}

EvalMode parse_eval_mode(std::string_view s) {
  if (s == "auto") return EvalMode::auto_detect;
  if (s == "binary") return EvalMode::binary;
  if (s == "regression") return EvalMode::regression;
  throw UsageError("unknown evaluation mode '" + std::string(s) + "' (auto|binary|regression)");
}

MetricsReport evaluate_predictions(const Predictions& pred, const Table& labels, const EvaluateRequest& req) {
  if (pred.columns.empty()) throw DataError("predictions have no value columns");
  const std::size_t n = pred.values.front().size();
  if (labels.row_count() != n) {
    throw DataError("predictions have " + std::to_string(n) + " rows, labels have " +
                    std::to_string(labels.row_count()));
  }
  auto label_values = [&](const std::string& name, bool binary) {
    if (!labels.find(name)) throw DataError("labels file has no column '" + name + "'");
    const auto& cells = labels.column(name);
    std::vector<double> y;
    y.reserve(cells.size());
    for (std::size_t r = 0; r < cells.size(); ++r) {
      const double v = parse_number(cells[r], "labels row " + std::to_string(r + 1));
      if (binary && v != 0.0 && v != 1.0) {
        throw DataError("labels row " + std::to_string(r + 1) + ": expected 0 or 1 in '" + name + "'");
      }
      y.push_back(v);
    }
    return y;
  };
  auto column = [&](std::string_view name) -> const std::vector<double>* {
    for (std::size_t i = 0; i < pred.columns.size(); ++i) {
      if (pred.columns[i] == name) return &pred.values[i];
    }
    return nullptr;
  };

  EvalMode mode = req.mode;
  if (mode == EvalMode::auto_detect) mode = column("rating") ? EvalMode::regression : EvalMode::binary;
  MetricsReport report;
  report.dataset = req.labels.filename().string();
  if (mode == EvalMode::regression) {
    const auto* r = column("rating");
    if (!r) throw DataError("regression mode needs a 'rating' prediction column");
    report.add("rmse", rmse(*r, label_values(req.rating_column, false)));
    return report;
  }
  std::vector<double> nces;
  for (const auto& [col, label] : {std::pair{"p_click", req.click_column}, {"p_install", req.install_column}}) {
    const auto* p = column(col);
    if (!p) continue;
    const auto y = label_values(label, true);
    const std::string task = std::string(col).substr(2);
    report.add(task + ".logloss", log_loss(*p, y));
    nces.push_back(normalized_cross_entropy(*p, y));
    report.add(task + ".nce", nces.back());
    report.add(task + ".auc", auc(*p, y));
  }
  if (nces.empty()) throw DataError("binary mode needs a p_click or p_install prediction column");
  if (nces.size() == 2) report.add("nce", (nces[0] + nces[1]) / 2.0);
  return report;
}

MetricsReport cmd_evaluate(const EvaluateRequest& req) {
  const Table table = read_table(req.predictions);
  Predictions pred;
  for (std::size_t c = 0; c < table.column_count(); ++c) {
    if (table.names[c] == "row_id") continue;
    pred.columns.push_back(table.names[c]);
    std::vector<double> v;
    v.reserve(table.row_count());
    for (std::size_t r = 0; r < table.row_count(); ++r) {
      v.push_back(parse_number(table.columns[c][r], "predictions row " + std::to_string(r + 1)));
    }
    pred.values.push_back(std::move(v));
  }
  return evaluate_predictions(pred, read_table(req.labels), req);
}

std::vector<AblationRow> cmd_ablate(const AblateRequest& req) {
  Table all = read_table(req.data, req.schema.delimiter);
  Table train_rows, test_rows;
  if (req.test) {
    train_rows = std::move(all);
    test_rows = read_table(*req.test, req.schema.delimiter);
  } else {
    if (!(req.holdout_fraction > 0.0 && req.holdout_fraction < 1.0)) {
      throw UsageError("holdout fraction must lie in (0, 1)");
    }
    const auto order = shuffled_indices(all.row_count(), derive_seed(req.settings.train.seed, 5));
    const auto n_test = static_cast<std::size_t>(req.holdout_fraction * static_cast<double>(order.size()));
    const std::span<const std::size_t> idx(order);
    test_rows = select_rows(all, idx.first(n_test));
    train_rows = select_rows(all, idx.subspan(n_test));
  }
  FeaturePipeline pipeline(req.schema);
  const auto data = pipeline.encode(train_rows, EncodeMode::fit);
  const auto test = pipeline.transform(test_rows);
  const auto base = resolve_settings(req.settings, pipeline, data);

  std::vector<AblationRow> rows;
  for (const auto& variant : req.variants) {
    const auto start = Clock::now();
    AblationRow row{variant, base, {}, 0, {}};
    apply_variant(variant, row.settings.model, row.settings.train);
    row.settings = resolve_settings(row.settings, pipeline, data);
    const auto& mc = row.settings.model;
    const auto& tc = row.settings.train;
    log_line(req.log, "variant " + variant);
    auto on_epoch = [&](const EpochRecord& e) { log_line(req.log, "  " + epoch_line(e)); };
    std::vector<std::vector<double>> outputs;
    if (tc.kfold.enabled) {
      auto ens = kfold_train(data, tc.kfold.k, mc, tc, on_epoch);
      for (auto& m : ens.members) m.round_to_float();
      row.tower_count = ens.members.front().towers().size();
      outputs = predict_ensemble(ens.members, test);
      row.members = std::move(ens.members);
    } else {
      Rng init_rng(derive_seed(tc.seed, 0));
      auto run = train(WMLFFModel::init(mc, init_rng), data, nullptr, tc, on_epoch);
      run.model.round_to_float();
      row.tower_count = run.model.towers().size();
      outputs = predict_dataset(run.model, test);
      row.members.push_back(std::move(run.model));
    }
    row.report.dataset = variant;
    row.report.config_hash = run_config_hash(mc, tc);
    score_outputs(row.report, to_predictions(pipeline, mc, std::move(outputs)), test);
    row.report.wall_clock_seconds = seconds_since(start);
    rows.push_back(std::move(row));
  }
  if (req.out) {
    std::vector<MetricsReport> reports;
    for (const auto& r : rows) reports.push_back(r.report);
    write_metrics_table(*req.out, reports, "variant");
  }
  return rows;
}

PlantedData cmd_generate(PlantedSpec spec, std::size_t test_rows, const std::filesystem::path& out) {
  spec.n_rows += test_rows;
  auto data = generate(spec);
  write_planted(out, spec, data, test_rows);
  return data;
}

void cmd_adapt_movielens(const std::filesystem::path& raw_dir, const std::filesystem::path& out,
                         std::string_view split, bool bias_stats, BiasStdRatio ratio) {
  write_movielens(out, adapt_movielens(raw_dir, split, bias_stats, ratio));
}

std::size_t cmd_adapt_criteo(const std::filesystem::path& raw, const std::filesystem::path& out_dir,
                             double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("sample fraction must lie in (0, 1]");
  std::ifstream in(raw, std::ios::binary);
  if (!in) {
    throw DataError("cannot open '" + raw.string() +
                    "'; expected a tab-separated file of label, I1..I13, C1..C26 without a header");
  }
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "criteo.csv", std::ios::binary);
  if (!out) throw DataError("cannot write '" + (out_dir / "criteo.csv").string() + "'");
  SchemaConfig schema;
  schema.columns.emplace_back("label", DeclaredRole::label_click);
  for (int i = 1; i <= 13; ++i) schema.columns.emplace_back("I" + std::to_string(i), DeclaredRole::numeric);
  for (int i = 1; i <= 26; ++i) schema.columns.emplace_back("C" + std::to_string(i), DeclaredRole::categorical);
  for (std::size_t c = 0; c < schema.columns.size(); ++c) out << (c ? "," : "") << schema.columns[c].first;
  out << '\n';

  Rng rng(derive_seed(seed, 6));
  std::string line;
  std::size_t line_no = 0, kept = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || rng.uniform() > fraction) continue;
    std::size_t fields = 1;
    for (char& ch : line) {
      if (ch == '\t') {
        ch = ',';
        ++fields;
      } else if (ch == ',' || ch == '"') {
        throw DataError("line " + std::to_string(line_no) + ": unexpected comma or quote");
      }
    }
    if (fields != 40) {
      throw DataError("line " + std::to_string(line_no) + ": expected 40 fields, got " + std::to_string(fields));
    }
    out << line << '\n';
    ++kept;
  }
  std::ofstream sc(out_dir / "schema.cfg", std::ios::binary);
  sc << format_schema_config(schema);
  return kept;
}

}  // namespace wmlff
