#include "wmlff/features/pipeline.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "json.hpp"

#include "wmlff/errors.hpp"

namespace wmlff {

using json = nlohmann::ordered_json;

namespace {

constexpr int kPipelineVersion = 1;

std::vector<double> parse_label_column(const std::vector<std::string>& cells,
                                       const std::string& name, bool binary) {
  std::vector<double> out;
  out.reserve(cells.size());
  for (std::size_t r = 0; r < cells.size(); ++r) {
    const std::string ctx = "row " + std::to_string(r + 1) + ", label '" + name + "'";
    if (is_null(cells[r])) throw DataError(ctx + ": missing value");
    const double v = parse_number(cells[r], ctx);
    if (binary && v != 0.0 && v != 1.0) throw DataError(ctx + ": expected 0 or 1");
    out.push_back(v);
  }
  return out;
}

std::vector<double> parse_numeric_column(const std::vector<std::string>& cells,
                                         const std::string& name) {
  std::vector<double> out;
  out.reserve(cells.size());
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (is_null(cells[r])) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double v = parse_number(cells[r], "row " + std::to_string(r + 1) + ", column '" + name + "'");
    if (!std::isfinite(v)) {
      throw DataError("row " + std::to_string(r + 1) + ", column '" + name + "': non-finite value");
    }
    out.push_back(v);
  }
  return out;
}

double parse_binary(const std::string& cell, std::size_t r, const std::string& name) {
  if (is_null(cell)) return 0.0;
  const std::string ctx = "row " + std::to_string(r + 1) + ", column '" + name + "'";
  const double v = parse_number(cell, ctx);
  if (v != 0.0 && v != 1.0) throw DataError(ctx + ": binary column expects 0 or 1");
  return v;
}

json stats_json(const EntityStats& s) { return json::array({s.average, s.ratio}); }
EntityStats stats_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

}  // namespace

EncodedDataset EncodedDataset::subset(std::span<const std::size_t> indices) const {
  EncodedDataset out;
  out.rows = indices.size();
  out.n_categorical = n_categorical;
  out.cardinalities = cardinalities;
  out.categorical.reserve(indices.size() * n_categorical);
  out.numeric = Matrix(indices.size(), numeric.cols());
  auto pick = [&](const std::optional<std::vector<double>>& src) -> std::optional<std::vector<double>> {
    if (!src) return std::nullopt;
    std::vector<double> v;
    v.reserve(indices.size());
    for (const auto i : indices) v.push_back((*src)[i]);
    return v;
  };
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= rows) throw DimensionError("subset index " + std::to_string(i) + " out of range");
    const auto cr = categorical_row(i);
    out.categorical.insert(out.categorical.end(), cr.begin(), cr.end());
    const auto nr = numeric.row(i);
    std::copy(nr.begin(), nr.end(), out.numeric.row(k).begin());
  }
  out.click = pick(click);
  out.install = pick(install);
  out.rating = pick(rating);
  return out;
}

FeaturePipeline::FeaturePipeline(SchemaConfig config) : config_(std::move(config)) {}

std::optional<std::string> FeaturePipeline::label_column(ColumnRole role) const {
  const auto names = schema_.names_with(role);
  if (names.empty()) return std::nullopt;
  return names.front();
}

void FeaturePipeline::fit(const Table& rows) {
  if (rows.row_count() == 0) throw DataError("cannot fit the feature pipeline on zero rows");
  for (const auto& name : rows.names) {
    if (!config_.declared(name)) throw SchemaError("column '" + name + "' is not declared in the schema");
  }
  std::vector<ColumnStats> stats;
  for (const auto& [name, declared] : config_.columns) {
    const auto& cells = rows.column(name);
    ColumnStats s{name, declared, 0, 0};
    std::unordered_set<std::string_view> distinct;
    for (const auto& c : cells) {
      if (is_null(c)) continue;
      ++s.non_null;
      distinct.insert(c);
    }
    s.distinct = distinct.size();
    stats.push_back(std::move(s));
  }
  schema_ = infer_schema(stats, config_.threshold);
  for (const ColumnRole lr : {ColumnRole::label_click, ColumnRole::label_install, ColumnRole::label_rating}) {
    if (schema_.count(lr) > 1) {
      throw SchemaError("at most one column may have role " + std::string(to_string(lr)));
    }
  }
  if (!schema_.count(ColumnRole::label_click) && !schema_.count(ColumnRole::label_install) &&
      !schema_.count(ColumnRole::label_rating)) {
    throw SchemaError("fitting needs at least one label column");
  }

  // Labels drive the target encoders: click and install rates for binary
  // tasks, the rescaled rating for regression.
  std::vector<std::vector<double>> targets;
  std::optional<std::vector<double>> ratings;
  for (const ColumnRole lr : {ColumnRole::label_click, ColumnRole::label_install}) {
    if (const auto name = label_column(lr)) targets.push_back(parse_label_column(rows.column(*name), *name, true));
  }
  if (const auto name = label_column(ColumnRole::label_rating)) {
    ratings = parse_label_column(rows.column(*name), *name, false);
    if (targets.empty()) {
      std::vector<double> t;
      t.reserve(ratings->size());
      for (const double r : *ratings) t.push_back(rescale_rating(r));
      targets.push_back(std::move(t));
    }
  }
  std::vector<std::span<const double>> target_spans(targets.begin(), targets.end());

  columns_.clear();
  warnings_.clear();
  for (std::size_t c = 0; c < schema_.columns.size(); ++c) {
    const auto& spec = schema_.columns[c];
    FittedColumn fc{spec.name, config_.columns[c].second, spec.role, std::monostate{}};
    const auto& cells = rows.column(spec.name);
    switch (spec.role) {
      case ColumnRole::high_card_cat:
        fc.encoder = OrdinalEncoder::fit(cells);
        break;
      case ColumnRole::low_card_cat:
        fc.encoder = TargetEncoder::fit(cells, target_spans);
        break;
      case ColumnRole::numeric: {
        auto st = NumericStandardizer::fit(parse_numeric_column(cells, spec.name), config_.lambda);
        if (st.constant()) {
          warnings_.push_back("numeric column '" + spec.name + "' is constant; it encodes to 0");
        }
        fc.encoder = st;
        break;
      }
      default:
        break;
    }
    columns_.push_back(std::move(fc));
  }

  bias_.reset();
  if (config_.bias_stats) {
    if (!ratings) throw SchemaError("bias statistics need a label_rating column");
    if (config_.bias_user.empty() || config_.bias_item.empty()) {
      throw SchemaError("bias statistics need bias_user and bias_item");
    }
    bias_ = BiasStats::fit(rows.column(config_.bias_user), rows.column(config_.bias_item), *ratings,
                           config_.bias_std_ratio, config_.rating_output_sigmoid);
  }
  fitted_ = true;
}

EncodedDataset FeaturePipeline::encode(const Table& rows, EncodeMode mode) {
  if (mode == EncodeMode::fit) fit(rows);
  return transform(rows);
}

EncodedDataset FeaturePipeline::transform(const Table& rows) const {
  if (!fitted_) throw UsageError("feature pipeline is not fitted");
  for (const auto& name : rows.names) {
    if (!schema_.role_of(name)) throw SchemaError("unknown column '" + name + "'");
  }
  const std::size_t n = rows.row_count();
  EncodedDataset out;
  out.rows = n;
  out.cardinalities = cardinalities();
  out.n_categorical = out.cardinalities.size();
  out.categorical.reserve(n * out.n_categorical);
  const std::size_t width = numeric_width();
  out.numeric = Matrix(n, width);

  struct Source {
    const FittedColumn* column;
    const std::vector<std::string>* cells;
    std::vector<double> parsed;
  };
  std::vector<Source> ordinal, numeric, binary, target;
  for (const auto& fc : columns_) {
    if (fc.role == ColumnRole::ignore || is_label(fc.role)) continue;
    if (!rows.find(fc.name)) throw SchemaError("column '" + fc.name + "' missing from input");
    Source s{&fc, &rows.column(fc.name), {}};
    switch (fc.role) {
      case ColumnRole::high_card_cat: ordinal.push_back(std::move(s)); break;
      case ColumnRole::low_card_cat: target.push_back(std::move(s)); break;
      case ColumnRole::numeric:
        s.parsed = parse_numeric_column(*s.cells, fc.name);
        numeric.push_back(std::move(s));
        break;
      case ColumnRole::binary: binary.push_back(std::move(s)); break;
      default: break;
    }
  }
  const std::vector<std::string>* bias_user = nullptr;
  const std::vector<std::string>* bias_item = nullptr;
  if (bias_) {
    bias_user = &rows.column(config_.bias_user);
    bias_item = &rows.column(config_.bias_item);
  }

  for (std::size_t r = 0; r < n; ++r) {
    for (const auto& s : ordinal) {
      out.categorical.push_back(std::get<OrdinalEncoder>(s.column->encoder).encode(std::string_view((*s.cells)[r])));
    }
    auto row = out.numeric.row(r);
    std::size_t k = 0;
    for (const auto& s : numeric) {
      const double v = s.parsed[r];
      const auto& st = std::get<NumericStandardizer>(s.column->encoder);
      row[k++] = st.transform(std::isnan(v) ? std::nullopt : std::optional<double>(v));
    }
    for (const auto& s : binary) row[k++] = parse_binary((*s.cells)[r], r, s.column->name);
    for (const auto& s : target) {
      for (const double v : std::get<TargetEncoder>(s.column->encoder).encode((*s.cells)[r])) row[k++] = v;
    }
    if (bias_) {
      for (const double v : bias_->derive((*bias_user)[r], (*bias_item)[r])) row[k++] = v;
    }
  }

  if (const auto name = label_column(ColumnRole::label_click); name && rows.find(*name)) {
    out.click = parse_label_column(rows.column(*name), *name, true);
  }
  if (const auto name = label_column(ColumnRole::label_install); name && rows.find(*name)) {
    out.install = parse_label_column(rows.column(*name), *name, true);
  }
  if (const auto name = label_column(ColumnRole::label_rating); name && rows.find(*name)) {
    out.rating = parse_label_column(rows.column(*name), *name, false);
  }
  return out;
}

std::vector<std::size_t> FeaturePipeline::cardinalities() const {
  std::vector<std::size_t> out;
  for (const auto& fc : columns_) {
    if (fc.role == ColumnRole::high_card_cat) out.push_back(std::get<OrdinalEncoder>(fc.encoder).cardinality());
  }
  return out;
}

std::vector<std::string> FeaturePipeline::numeric_feature_names() const {
  std::vector<std::string> out;
  for (const auto& fc : columns_) {
    if (fc.role == ColumnRole::numeric) out.push_back(fc.name);
  }
  for (const auto& fc : columns_) {
    if (fc.role == ColumnRole::binary) out.push_back(fc.name);
  }
  for (const auto& fc : columns_) {
    if (fc.role != ColumnRole::low_card_cat) continue;
    const auto& te = std::get<TargetEncoder>(fc.encoder);
    static constexpr const char* kSuffix[] = {"tc", "ti"};
    for (std::size_t k = 0; k < te.label_count(); ++k) {
      out.push_back(fc.name + "." + (te.label_count() == 2 ? kSuffix[k] : "rate"));
    }
  }
  if (bias_) {
    for (const auto name : BiasStats::kFeatureNames) out.emplace_back(name);
  }
  return out;
}

std::string FeaturePipeline::to_json() const {
  if (!fitted_) throw UsageError("feature pipeline is not fitted");
  json j;
  j["format"] = "wmlff-pipeline";
  j["version"] = kPipelineVersion;
  j["threshold"] = config_.threshold;
  j["lambda"] = config_.lambda;
  j["delimiter"] = config_.delimiter == '\0' ? "auto" : config_.delimiter == '\t' ? "tab" : "comma";
  j["rating_output"] = config_.rating_output_sigmoid ? "sigmoid" : "linear";
  json cols = json::array();
  for (const auto& fc : columns_) {
    json c;
    c["name"] = fc.name;
    c["declared"] = to_string(fc.declared);
    c["role"] = to_string(fc.role);
    if (const auto* o = std::get_if<OrdinalEncoder>(&fc.encoder)) {
      c["categories"] = o->categories();
    } else if (const auto* t = std::get_if<TargetEncoder>(&fc.encoder)) {
      c["categories"] = t->categories();
      c["rates"] = t->rates();
    } else if (const auto* s = std::get_if<NumericStandardizer>(&fc.encoder)) {
      c["mu"] = s->mu;
      c["sigma"] = s->sigma;
      c["lambda"] = s->lambda;
    }
    cols.push_back(std::move(c));
  }
  j["columns"] = std::move(cols);
  if (bias_) {
    json b;
    b["user_column"] = config_.bias_user;
    b["item_column"] = config_.bias_item;
    b["ratio"] = to_string(bias_->ratio_kind());
    b["rescale_average"] = bias_->rescale_average();
    b["global"] = stats_json(bias_->global());
    json users = json::array(), items = json::array();
    for (const auto& [k, s] : bias_->users()) users.push_back(json::array({k, s.average, s.ratio}));
    for (const auto& [k, s] : bias_->items()) items.push_back(json::array({k, s.average, s.ratio}));
    b["users"] = std::move(users);
    b["items"] = std::move(items);
    j["bias_stats"] = std::move(b);
  } else {
    j["bias_stats"] = nullptr;
  }
  j["warnings"] = warnings_;
  return j.dump(1) + "\n";
}

FeaturePipeline FeaturePipeline::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("pipeline is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "wmlff-pipeline") throw SchemaError("not a wmlff pipeline");
    if (j.at("version").get<int>() != kPipelineVersion) throw SchemaError("unsupported pipeline version");
    FeaturePipeline p;
    p.config_.threshold = j.at("threshold").get<std::size_t>();
    p.config_.lambda = j.at("lambda").get<double>();
    const auto delim = j.at("delimiter").get<std::string>();
    p.config_.delimiter = delim == "tab" ? '\t' : delim == "comma" ? ',' : '\0';
    p.config_.rating_output_sigmoid = j.at("rating_output") == "sigmoid";
    p.schema_.threshold = p.config_.threshold;
    for (const auto& c : j.at("columns")) {
      FittedColumn fc;
      fc.name = c.at("name").get<std::string>();
      fc.declared = parse_declared_role(c.at("declared").get<std::string>());
      fc.role = parse_column_role(c.at("role").get<std::string>());
      if (fc.role == ColumnRole::high_card_cat) {
        fc.encoder = OrdinalEncoder(c.at("categories").get<std::vector<std::string>>());
      } else if (fc.role == ColumnRole::low_card_cat) {
        fc.encoder = TargetEncoder(c.at("categories").get<std::vector<std::string>>(),
                                   c.at("rates").get<std::vector<std::vector<double>>>());
      } else if (fc.role == ColumnRole::numeric) {
        fc.encoder = NumericStandardizer{c.at("mu").get<double>(), c.at("sigma").get<double>(),
                                         c.at("lambda").get<double>()};
      }
      p.config_.columns.emplace_back(fc.name, fc.declared);
      p.schema_.columns.push_back({fc.name, fc.role});
      p.columns_.push_back(std::move(fc));
    }
    if (!j.at("bias_stats").is_null()) {
      const auto& b = j.at("bias_stats");
      p.config_.bias_stats = true;
      p.config_.bias_user = b.at("user_column").get<std::string>();
      p.config_.bias_item = b.at("item_column").get<std::string>();
      p.config_.bias_std_ratio = parse_bias_std_ratio(b.at("ratio").get<std::string>());
      std::vector<std::pair<std::string, EntityStats>> users, items;
      for (const auto& u : b.at("users")) {
        users.emplace_back(u.at(0).get<std::string>(), EntityStats{u.at(1).get<double>(), u.at(2).get<double>()});
      }
      for (const auto& i : b.at("items")) {
        items.emplace_back(i.at(0).get<std::string>(), EntityStats{i.at(1).get<double>(), i.at(2).get<double>()});
      }
      p.bias_ = BiasStats::restore(p.config_.bias_std_ratio, b.at("rescale_average").get<bool>(),
                                   stats_from(b.at("global")), std::move(users), std::move(items));
    }
    p.warnings_ = j.at("warnings").get<std::vector<std::string>>();
    p.fitted_ = true;
    return p;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed pipeline: ") + e.what());
  }
}

EncodedDataset encode_dataset(FeaturePipeline& pipeline, const Table& rows, EncodeMode mode) {
  return pipeline.encode(rows, mode);
}

}  // namespace wmlff
