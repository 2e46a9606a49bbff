#include "wmlff/features/schema.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <utility>

#include "wmlff/errors.hpp"

namespace wmlff {

namespace {

constexpr std::array<std::pair<ColumnRole, std::string_view>, 8> kRoleNames{{
    {ColumnRole::high_card_cat, "high_card_cat"},
    {ColumnRole::low_card_cat, "low_card_cat"},
    {ColumnRole::numeric, "numeric"},
    {ColumnRole::binary, "binary"},
    {ColumnRole::label_click, "label_click"},
    {ColumnRole::label_install, "label_install"},
    {ColumnRole::label_rating, "label_rating"},
    {ColumnRole::ignore, "ignore"},
}};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(std::string_view v, std::size_t line) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw SchemaError("schema config line " + std::to_string(line) + ": '" + std::string(v) +
                    "' is not a boolean");
}

}  // namespace

std::string_view to_string(ColumnRole role) {
  for (const auto& [r, name] : kRoleNames) {
    if (r == role) return name;
  }
  return "?";
}

ColumnRole parse_column_role(std::string_view text) {
  for (const auto& [r, name] : kRoleNames) {
    if (name == text) return r;
  }
  throw SchemaError("unknown column role '" + std::string(text) + "'");
}

std::string_view to_string(DeclaredRole role) {
  if (role == DeclaredRole::categorical) return "categorical";
  return to_string(static_cast<ColumnRole>(static_cast<int>(role) - 1));
}

DeclaredRole parse_declared_role(std::string_view text) {
  if (text == "categorical") return DeclaredRole::categorical;
  return static_cast<DeclaredRole>(static_cast<int>(parse_column_role(text)) + 1);
}

bool is_label(ColumnRole role) {
  return role == ColumnRole::label_click || role == ColumnRole::label_install ||
         role == ColumnRole::label_rating;
}

std::string_view to_string(BiasStdRatio r) {
  return r == BiasStdRatio::mu_over_sigma ? "mu_over_sigma" : "sigma_over_mu";
}

BiasStdRatio parse_bias_std_ratio(std::string_view text) {
  if (text == "mu_over_sigma") return BiasStdRatio::mu_over_sigma;
  if (text == "sigma_over_mu") return BiasStdRatio::sigma_over_mu;
  throw SchemaError("bias_std_ratio must be mu_over_sigma or sigma_over_mu, got '" +
                    std::string(text) + "'");
}

std::vector<std::string> FeatureSchema::names_with(ColumnRole role) const {
  std::vector<std::string> out;
  for (const auto& c : columns) {
    if (c.role == role) out.push_back(c.name);
  }
  return out;
}

std::optional<ColumnRole> FeatureSchema::role_of(std::string_view name) const {
  for (const auto& c : columns) {
    if (c.name == name) return c.role;
  }
  return std::nullopt;
}

std::size_t FeatureSchema::count(ColumnRole role) const {
  std::size_t n = 0;
  for (const auto& c : columns) n += c.role == role;
  return n;
}

FeatureSchema infer_schema(const std::vector<ColumnStats>& stats, std::size_t threshold) {
  FeatureSchema schema;
  schema.threshold = threshold;
  for (const auto& s : stats) {
    ColumnSpec spec{s.name, ColumnRole::ignore};
    if (s.declared != DeclaredRole::ignore && s.non_null == 0) {
      throw SchemaError("column '" + s.name + "' has no observed values");
    }
    switch (s.declared) {
      case DeclaredRole::categorical:
        spec.role = s.distinct > threshold ? ColumnRole::high_card_cat : ColumnRole::low_card_cat;
        break;
      default:
        spec.role = static_cast<ColumnRole>(static_cast<int>(s.declared) - 1);
        break;
    }
    schema.columns.push_back(std::move(spec));
  }
  return schema;
}

std::optional<DeclaredRole> SchemaConfig::declared(std::string_view name) const {
  for (const auto& [n, r] : columns) {
    if (n == name) return r;
  }
  return std::nullopt;
}

SchemaConfig parse_schema_config(std::string_view text) {
  SchemaConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw SchemaError("schema config line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.starts_with("column.")) {
      std::string name(key.substr(7));
      if (name.empty()) {
        throw SchemaError("schema config line " + std::to_string(line_no) + ": empty column name");
      }
      if (cfg.declared(name)) throw SchemaError("column '" + name + "' declared twice");
      cfg.columns.emplace_back(std::move(name), parse_declared_role(value));
    } else if (key == "threshold") {
      cfg.threshold = std::stoul(std::string(value));
    } else if (key == "lambda") {
      cfg.lambda = std::stod(std::string(value));
      if (!(cfg.lambda > 0.0)) throw SchemaError("lambda must be positive");
    } else if (key == "delimiter") {
      if (value == "auto") cfg.delimiter = '\0';
      else if (value == "comma") cfg.delimiter = ',';
      else if (value == "tab") cfg.delimiter = '\t';
      else throw SchemaError("delimiter must be auto, comma or tab");
    } else if (key == "bias_stats") {
      cfg.bias_stats = parse_bool(value, line_no);
    } else if (key == "bias_user") {
      cfg.bias_user = value;
    } else if (key == "bias_item") {
      cfg.bias_item = value;
    } else if (key == "bias_std_ratio") {
      cfg.bias_std_ratio = parse_bias_std_ratio(value);
    } else if (key == "rating_output") {
      if (value == "sigmoid") cfg.rating_output_sigmoid = true;
      else if (value == "linear") cfg.rating_output_sigmoid = false;
      else throw SchemaError("rating_output must be sigmoid or linear");
    } else {
      throw SchemaError("schema config line " + std::to_string(line_no) + ": unknown key '" +
                        std::string(key) + "'");
    }
  }
  return cfg;
}

SchemaConfig read_schema_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_schema_config(buf.str());
}

std::string format_schema_config(const SchemaConfig& cfg) {
  std::ostringstream out;
  out << "threshold = " << cfg.threshold << "\n";
  out << "lambda = " << cfg.lambda << "\n";
  out << "delimiter = "
      << (cfg.delimiter == '\0' ? "auto" : cfg.delimiter == '\t' ? "tab" : "comma") << "\n";
  out << "bias_stats = " << (cfg.bias_stats ? "true" : "false") << "\n";
  if (!cfg.bias_user.empty()) out << "bias_user = " << cfg.bias_user << "\n";
  if (!cfg.bias_item.empty()) out << "bias_item = " << cfg.bias_item << "\n";
  out << "bias_std_ratio = " << to_string(cfg.bias_std_ratio) << "\n";
  out << "rating_output = " << (cfg.rating_output_sigmoid ? "sigmoid" : "linear") << "\n";
  for (const auto& [name, role] : cfg.columns) {
    out << "column." << name << " = " << to_string(role) << "\n";
  }
  return out.str();
}

}  // namespace wmlff
