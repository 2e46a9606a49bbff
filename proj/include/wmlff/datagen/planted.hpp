#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "wmlff/features/schema.hpp"
#include "wmlff/features/table.hpp"
#include "wmlff/model/model.hpp"

namespace wmlff {

inline ModelConfig default_teacher() {
  ModelConfig c;
  c.dim = 8;
  c.depth = 3;
  c.noise_sigma = 0.0;
  return c;
}

// Synthetic data whose labels come from a known WMLFF teacher.
struct PlantedSpec {
  std::size_t n_rows = 10000;
  std::vector<std::size_t> cardinalities{50, 40, 30};
  std::size_t n_numeric = 4;
  // Architecture of the teacher; cardinalities and n_numeric are taken from above.
  ModelConfig teacher = default_teacher();
  // Fixes the teacher's global scale m. Otherwise m is chosen so that the
  // teacher logits have standard deviation target_logit_std (0 keeps m = 1).
  std::optional<double> teacher_global_scale;
  double target_logit_std = 2.0;
  // Bernoulli(p*) labels when true, deterministic p* >= 0.5 labels when false.
  bool label_noise = true;
  std::uint64_t seed = 0;

  ModelConfig teacher_config() const;
};

struct PlantedData {
  Table table;                               // categorical, numeric and label columns
  std::vector<std::vector<double>> p_star;   // per task, hidden teacher probabilities
  std::vector<std::vector<double>> labels;   // per task, as written to the table
  WMLFFModel teacher;
};

PlantedData generate(const PlantedSpec& spec);

// Schema config declaring the generated columns.
SchemaConfig planted_schema(const PlantedSpec& spec);

// data.csv, p_star.csv (row_id + per-task probabilities) and schema.cfg. The
// last test_rows rows go to test.csv / p_star_test.csv instead.
void write_planted(const std::filesystem::path& dir, const PlantedSpec& spec, const PlantedData& data,
                   std::size_t test_rows = 0);

}  // namespace wmlff
