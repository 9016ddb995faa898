#include "eddi/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "eddi/error.hpp"
#include "eddi/format.hpp"

namespace eddi {

namespace {

std::string trim(std::string s) {
  auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && issp(static_cast<unsigned char>(s[b]))) ++b;
  s = s.substr(b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Matrix select_rows(const Matrix& m, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = m.row(idx[k]);
  return out;
}

}  // namespace

Matrix Dataset::train_rows() const { return select_rows(values, train_index); }
Matrix Dataset::test_rows() const { return select_rows(values, test_index); }

VariableSchema load_schema(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::config, "cannot open schema " + path.string(), "schema");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, "schema is not valid JSON: " + std::string(e.what()), "schema");
  }
  return schema_from_json(j);
}

std::pair<std::vector<Index>, std::vector<Index>> split_rows(Index n, const SplitOptions& split) {
  if (split.test_fraction < 0.0 || split.test_fraction >= 1.0) {
    fail(ErrorKind::config, "test fraction must lie in [0, 1)", "test_fraction");
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 eng(derive_seed(split.seed, {0x53504c4954ULL}));
  // Fisher-Yates with explicit index draws; std::shuffle's draw pattern is
  // implementation-defined.
  for (std::size_t k = order.size(); k > 1; --k) {
    const std::size_t j = static_cast<std::size_t>(eng() % k);
    std::swap(order[k - 1], order[j]);
  }
  auto n_test = static_cast<Index>(std::floor(static_cast<double>(n) * split.test_fraction + 1e-9));
  if (split.test_fraction > 0.0 && n_test == 0 && n > 1) n_test = 1;
  if (n_test >= n) n_test = n - 1;
  std::vector<Index> test(order.begin(), order.begin() + n_test);
  std::vector<Index> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

double scale_value(const Variable& v, double raw) {
  if (v.kind == VariableKind::binary) return raw;
  return (raw - v.min) / (v.max - v.min);
}

namespace {

Matrix read_raw(const std::filesystem::path& path, const VariableSchema& description) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::data, "cannot open data file " + path.string(), "data");
  std::string line;
  if (!std::getline(f, line)) fail(ErrorKind::data, "data file is empty", "data");
  const std::vector<std::string> header = split_line(line);

  std::map<std::string, Index> schema_pos;
  for (Index d = 0; d < description.size(); ++d) schema_pos[description.variables[static_cast<std::size_t>(d)].name] = d;
  std::vector<Index> column_to_var;
  std::vector<bool> seen(static_cast<std::size_t>(description.size()), false);
  for (const auto& name : header) {
    auto it = schema_pos.find(name);
    if (it == schema_pos.end()) fail(ErrorKind::data, "unknown column '" + name + "'", name);
    if (seen[static_cast<std::size_t>(it->second)]) fail(ErrorKind::data, "duplicate column '" + name + "'", name);
    seen[static_cast<std::size_t>(it->second)] = true;
    column_to_var.push_back(it->second);
  }
  for (Index d = 0; d < description.size(); ++d) {
    if (!seen[static_cast<std::size_t>(d)]) {
      const auto& name = description.variables[static_cast<std::size_t>(d)].name;
      fail(ErrorKind::data, "column '" + name + "' missing from " + path.filename().string(), name);
    }
  }

  std::vector<std::vector<double>> rows;
  Index line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      fail(ErrorKind::data, "row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                " cells, found " + std::to_string(cells.size()),
           "row " + std::to_string(line_no));
    }
    std::vector<double> row(static_cast<std::size_t>(description.size()), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string& cell = cells[c];
      if (cell.empty()) continue;
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        fail(ErrorKind::data, "row " + std::to_string(line_no) + ", column '" + header[c] + "': non-numeric cell '" +
                                  cell + "'",
             header[c]);
      }
      const Index d = column_to_var[c];
      const auto& var = description.variables[static_cast<std::size_t>(d)];
      if (var.kind == VariableKind::binary && v != 0.0 && v != 1.0) {
        fail(ErrorKind::data, "row " + std::to_string(line_no) + ", column '" + header[c] + "': binary value must be 0 or 1",
             header[c]);
      }
      row[static_cast<std::size_t>(d)] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::data, "data file has no rows", "data");
  Matrix raw(static_cast<Index>(rows.size()), description.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Index d = 0; d < description.size(); ++d) raw(static_cast<Index>(r), d) = rows[r][static_cast<std::size_t>(d)];
  return raw;
}

}  // namespace

Matrix read_scaled(const std::filesystem::path& path, const VariableSchema& fitted) {
  Matrix values = read_raw(path, fitted);
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index d = 0; d < values.cols(); ++d) {
      if (std::isnan(values(r, d))) continue;
      values(r, d) = std::clamp(scale_value(fitted.variables[static_cast<std::size_t>(d)], values(r, d)), 0.0, 1.0);
    }
  }
  return values;
}

Dataset ingest_csv(const std::filesystem::path& path, const VariableSchema& description, const SplitOptions& split) {
  description.validate();
  Dataset ds;
  ds.source = path;
  ds.split = split;
  ds.schema = description;
  ds.raw = read_raw(path, description);
  std::tie(ds.train_index, ds.test_index) = split_rows(ds.raw.rows(), split);

  for (Index d = 0; d < description.size(); ++d) {
    auto& var = ds.schema.variables[static_cast<std::size_t>(d)];
    if (var.kind != VariableKind::continuous) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (Index r : ds.train_index) {
      const double v = ds.raw(r, d);
      if (std::isnan(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(lo < hi)) fail(ErrorKind::data, "column '" + var.name + "' is constant (or empty) in the training split", var.name);
    var.min = lo;
    var.max = hi;
  }
  ds.values = ds.raw;
  std::vector<bool> is_test(static_cast<std::size_t>(ds.raw.rows()), false);
  for (Index r : ds.test_index) is_test[static_cast<std::size_t>(r)] = true;
  for (Index r = 0; r < ds.raw.rows(); ++r) {
    for (Index d = 0; d < description.size(); ++d) {
      const double v = ds.raw(r, d);
      if (std::isnan(v)) continue;
      double s = scale_value(ds.schema.variables[static_cast<std::size_t>(d)], v);
      if (is_test[static_cast<std::size_t>(r)]) s = std::clamp(s, 0.0, 1.0);
      ds.values(r, d) = s;
    }
  }
  ds.schema.validate();
  return ds;
}

void export_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) fail(ErrorKind::data, "cannot write " + path.string(), "out");
  for (Index d = 0; d < data.schema.size(); ++d) f << (d ? "," : "") << data.schema.variables[static_cast<std::size_t>(d)].name;
  f << '\n';
  for (Index r = 0; r < data.raw.rows(); ++r) {
    for (Index d = 0; d < data.raw.cols(); ++d) {
      if (d) f << ',';
      if (!std::isnan(data.raw(r, d))) f << format_double(data.raw(r, d));
    }
    f << '\n';
  }
}

}  // namespace eddi
