#include "wmlff/model/config.hpp"

#include "json.hpp"
#include "wmlff/errors.hpp"

namespace wmlff {

using json = nlohmann::ordered_json;

std::string_view to_string(HeadKind v) { return v == HeadKind::dot ? "dot" : "cosine"; }
std::string_view to_string(TowerLayout v) {
  switch (v) {
    case TowerLayout::dual: return "dual";
    case TowerLayout::independent: return "independent";
    case TowerLayout::single: return "single";
  }
  return "?";
}
std::string_view to_string(OutputKind v) { return v == OutputKind::sigmoid ? "sigmoid" : "linear"; }
std::string_view to_string(TapPoint v) { return v == TapPoint::post ? "post" : "pre"; }

HeadKind parse_head_kind(std::string_view s) {
  if (s == "dot") return HeadKind::dot;
  if (s == "cosine") return HeadKind::cosine;
  throw UsageError("head must be dot or cosine, got '" + std::string(s) + "'");
}

TowerLayout parse_tower_layout(std::string_view s) {
  if (s == "dual") return TowerLayout::dual;
  if (s == "independent") return TowerLayout::independent;
  if (s == "single") return TowerLayout::single;
  throw UsageError("towers must be dual, independent or single, got '" + std::string(s) + "'");
}

OutputKind parse_output_kind(std::string_view s) {
  if (s == "sigmoid") return OutputKind::sigmoid;
  if (s == "linear") return OutputKind::linear;
  throw UsageError("output must be sigmoid or linear, got '" + std::string(s) + "'");
}

TapPoint parse_tap_point(std::string_view s) {
  if (s == "post") return TapPoint::post;
  if (s == "pre") return TapPoint::pre;
  throw UsageError("tap must be pre or post, got '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (dim < 1) throw UsageError("dim must be at least 1");
  if (depth < 1) throw UsageError("tower depth must be at least 1");
  if (!(noise_sigma >= 0.0)) throw UsageError("noise sigma must be non-negative");
  if (!(activation_slope >= 0.0 && activation_slope < 1.0)) {
    throw UsageError("activation slope must lie in [0, 1)");
  }
  for (const auto c : cardinalities) {
    if (c == 0) throw UsageError("embedding cardinality must be positive");
  }
  if (input_width() == 0) throw UsageError("model has no input features");
}

std::string ModelConfig::to_json() const {
  json j;
  j["dim"] = dim;
  j["depth"] = depth;
  j["noise_sigma"] = noise_sigma;
  j["head"] = to_string(head);
  j["towers"] = to_string(towers);
  j["output"] = to_string(output);
  j["activation_slope"] = activation_slope;
  j["tap"] = to_string(tap);
  j["cardinalities"] = cardinalities;
  j["n_numeric"] = n_numeric;
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    ModelConfig c;
    c.dim = j.at("dim").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    c.head = parse_head_kind(j.at("head").get<std::string>());
    c.towers = parse_tower_layout(j.at("towers").get<std::string>());
    c.output = parse_output_kind(j.at("output").get<std::string>());
    c.activation_slope = j.at("activation_slope").get<double>();
    c.tap = parse_tap_point(j.at("tap").get<std::string>());
    c.cardinalities = j.at("cardinalities").get<std::vector<std::size_t>>();
    c.n_numeric = j.at("n_numeric").get<std::size_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed model config: ") + e.what());
  }
}

}  // namespace wmlff
