#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eddi/partial_vae.hpp"

namespace eddi {

struct SplitOptions {
  std::uint64_t seed = 0;
  double test_fraction = 0.0;  // 0 keeps every row for training
};

// A CSV table mapped onto a schema. Continuous columns are min-max scaled
// with statistics of the training rows only; test rows are clipped to [0, 1].
struct Dataset {
  VariableSchema schema;  // min/max hold the training-split range
  Matrix raw;             // N x D as read, NaN = missing
  Matrix values;          // N x D scaled, NaN = missing
  std::vector<Index> train_index;
  std::vector<Index> test_index;
  std::filesystem::path source;
  SplitOptions split;

  Index rows() const { return raw.rows(); }
  Matrix train_rows() const;
  Matrix test_rows() const;
};

// Schema file: {"variables": [{"name", "kind": "continuous"|"binary",
// "group"?, "target"?}, ...]}.
VariableSchema load_schema(const std::filesystem::path& path);

// Seeded split of n rows: floor-rounded test count, both halves ascending.
std::pair<std::vector<Index>, std::vector<Index>> split_rows(Index n, const SplitOptions& split);

Dataset ingest_csv(const std::filesystem::path& path, const VariableSchema& description, const SplitOptions& split);

// Reads a CSV against a fitted schema (as stored in a model) without
// refitting: continuous values are scaled with the schema's min/max and
// clipped to [0, 1]. Returns scaled rows, NaN = missing.
Matrix read_scaled(const std::filesystem::path& path, const VariableSchema& fitted);

// Writes the raw (unscaled) table in file order.
void export_csv(const Dataset& data, const std::filesystem::path& path);

double scale_value(const Variable& v, double raw);

}  // namespace eddi
