#pragma once

#include <stdexcept>
#include <string>

namespace wmlff {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Column roles, schema files, or fitted-pipeline inconsistencies.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (bad row, bad number, missing file).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: wrong mode, missing label, foreign tape variable.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Non-finite loss or gradient during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wmlff
