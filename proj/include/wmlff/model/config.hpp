#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace wmlff {

enum class HeadKind { dot, cosine };
// dual: click + shared + installed towers; independent: two private towers per
// task; single: one task over two towers.
enum class TowerLayout { dual, independent, single };
enum class OutputKind { sigmoid, linear };
// Which per-level vector feeds the heads: after (post) or before (pre) the activation.
enum class TapPoint { post, pre };

std::string_view to_string(HeadKind v);
std::string_view to_string(TowerLayout v);
std::string_view to_string(OutputKind v);
std::string_view to_string(TapPoint v);
HeadKind parse_head_kind(std::string_view s);
TowerLayout parse_tower_layout(std::string_view s);
OutputKind parse_output_kind(std::string_view s);
TapPoint parse_tap_point(std::string_view s);

struct ModelConfig {
  std::size_t dim = 32;
  std::size_t depth = 3;
  double noise_sigma = 0.5;
  HeadKind head = HeadKind::dot;
  TowerLayout towers = TowerLayout::dual;
  OutputKind output = OutputKind::sigmoid;
  double activation_slope = 0.01;
  TapPoint tap = TapPoint::post;
  std::vector<std::size_t> cardinalities;
  std::size_t n_numeric = 0;

  void validate() const;
  std::size_t task_count() const { return towers == TowerLayout::single ? 1 : 2; }
  std::size_t embedding_width() const { return cardinalities.empty() ? 0 : dim; }
  std::size_t input_width() const { return embedding_width() + n_numeric; }

  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace wmlff
