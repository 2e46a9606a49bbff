#include "wmlff/datagen/planted.hpp"

#include <cmath>
#include <fstream>

#include "wmlff/errors.hpp"
#include "wmlff/eval/metrics.hpp"
#include "wmlff/training/trainer.hpp"

namespace wmlff {

namespace {

std::vector<std::string> label_names(const ModelConfig& c) {
  if (c.task_count() == 2) return {"is_clicked", "is_installed"};
  return {"is_clicked"};
}

}  // namespace

ModelConfig PlantedSpec::teacher_config() const {
  ModelConfig c = teacher;
  c.cardinalities = cardinalities;
  c.n_numeric = n_numeric;
  c.output = OutputKind::sigmoid;
  c.validate();
  return c;
}

PlantedData generate(const PlantedSpec& spec) {
  const ModelConfig tc = spec.teacher_config();
  Rng data_rng(derive_seed(spec.seed, 10));
  Rng teacher_rng(derive_seed(spec.seed, 11));
  Rng label_rng(derive_seed(spec.seed, 12));

  PlantedData out{{}, {}, {}, WMLFFModel::init(tc, teacher_rng)};
  EncodedDataset enc;
  enc.rows = spec.n_rows;
  enc.n_categorical = spec.cardinalities.size();
  enc.cardinalities = spec.cardinalities;
  enc.numeric = Matrix(spec.n_rows, spec.n_numeric);
  enc.categorical.reserve(spec.n_rows * enc.n_categorical);
  std::vector<std::vector<std::string>> cat_cells(enc.n_categorical);
  std::vector<std::vector<std::string>> num_cells(spec.n_numeric);
  for (std::size_t r = 0; r < spec.n_rows; ++r) {
    for (std::size_t j = 0; j < enc.n_categorical; ++j) {
      const auto id = static_cast<std::int32_t>(data_rng.uniform_index(spec.cardinalities[j]));
      enc.categorical.push_back(id);
      cat_cells[j].push_back("v" + std::to_string(id));
    }
    for (std::size_t k = 0; k < spec.n_numeric; ++k) {
      const double x = data_rng.standard_normal();
      enc.numeric(r, k) = x;
      num_cells[k].push_back(format_double(x));
    }
  }

  auto& scale = out.teacher.parameters()[out.teacher.global_scale()].value[0];
  if (spec.teacher_global_scale) {
    scale = *spec.teacher_global_scale;
  } else if (spec.target_logit_std > 0.0 && spec.n_rows > 1) {
    // Sigmoid outputs invert to logits; m = 1 here, so the spread is that of the raw head.
    const auto p = predict_dataset(out.teacher, enc);
    double s2 = 0.0;
    std::size_t n = 0;
    for (const auto& task : p) {
      double mean = 0.0;
      std::vector<double> logits;
      for (const double q : task) logits.push_back(std::log(q / (1.0 - q)));
      for (const double z : logits) mean += z;
      mean /= static_cast<double>(logits.size());
      for (const double z : logits) s2 += (z - mean) * (z - mean);
      n += logits.size();
    }
    const double sd = std::sqrt(s2 / static_cast<double>(n));
    if (sd > 0.0 && std::isfinite(sd)) scale = spec.target_logit_std / sd;
  }
  out.p_star = predict_dataset(out.teacher, enc);

  for (std::size_t j = 0; j < enc.n_categorical; ++j) {
    out.table.add_column("cat" + std::to_string(j), std::move(cat_cells[j]));
  }
  for (std::size_t k = 0; k < spec.n_numeric; ++k) {
    out.table.add_column("num" + std::to_string(k), std::move(num_cells[k]));
  }
  const auto names = label_names(tc);
  for (std::size_t t = 0; t < out.p_star.size(); ++t) {
    std::vector<double> y;
    std::vector<std::string> cells;
    y.reserve(spec.n_rows);
    for (const double p : out.p_star[t]) {
      const double label = spec.label_noise ? (label_rng.uniform() <= p ? 1.0 : 0.0) : (p >= 0.5 ? 1.0 : 0.0);
      y.push_back(label);
      cells.push_back(label == 1.0 ? "1" : "0");
    }
    out.labels.push_back(std::move(y));
    if (spec.n_rows == 0 && out.table.names.empty()) {
      out.table.names.push_back(names[t]);
      out.table.columns.emplace_back();
    } else {
      out.table.add_column(names[t], std::move(cells));
    }
  }
  return out;
}

SchemaConfig planted_schema(const PlantedSpec& spec) {
  SchemaConfig cfg;
  for (std::size_t j = 0; j < spec.cardinalities.size(); ++j) {
    cfg.columns.emplace_back("cat" + std::to_string(j), DeclaredRole::categorical);
  }
  for (std::size_t k = 0; k < spec.n_numeric; ++k) {
    cfg.columns.emplace_back("num" + std::to_string(k), DeclaredRole::numeric);
  }
  cfg.columns.emplace_back("is_clicked", DeclaredRole::label_click);
  if (spec.teacher.task_count() == 2) cfg.columns.emplace_back("is_installed", DeclaredRole::label_install);
  return cfg;
}

namespace {

Table row_range(const Table& t, std::size_t begin, std::size_t end) {
  Table out;
  for (std::size_t c = 0; c < t.column_count(); ++c) {
    out.add_column(t.names[c], {t.columns[c].begin() + static_cast<std::ptrdiff_t>(begin),
                                t.columns[c].begin() + static_cast<std::ptrdiff_t>(end)});
  }
  return out;
}

void write_p_star(const std::filesystem::path& path, const std::vector<std::string>& labels,
                  const PlantedData& data, std::size_t begin, std::size_t end) {
  std::ofstream ps(path, std::ios::binary);
  if (!ps) throw DataError("cannot write '" + path.string() + "'");
  ps << "row_id";
  for (const auto& n : labels) ps << ",p_" << n.substr(3);
  ps << "\n";
  for (std::size_t r = begin; r < end; ++r) {
    ps << r - begin;
    for (const auto& task : data.p_star) ps << "," << format_double(task[r]);
    ps << "\n";
  }
}

}  // namespace

void write_planted(const std::filesystem::path& dir, const PlantedSpec& spec, const PlantedData& data,
                   std::size_t test_rows) {
  const std::size_t rows = data.table.row_count();
  if (test_rows > rows) throw UsageError("test rows exceed generated rows");
  const std::size_t split = rows - test_rows;
  const auto labels = label_names(spec.teacher_config());
  std::filesystem::create_directories(dir);
  write_delimited(dir / "data.csv", row_range(data.table, 0, split));
  write_p_star(dir / "p_star.csv", labels, data, 0, split);
  if (test_rows > 0) {
    write_delimited(dir / "test.csv", row_range(data.table, split, rows));
    write_p_star(dir / "p_star_test.csv", labels, data, split, rows);
  }
  std::ofstream sc(dir / "schema.cfg", std::ios::binary);
  if (!sc) throw DataError("cannot write '" + (dir / "schema.cfg").string() + "'");
  sc << format_schema_config(planted_schema(spec));
}

}  // namespace wmlff
