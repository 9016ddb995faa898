#include "eddi/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "eddi/error.hpp"

namespace eddi {

namespace {

auto find_index(const std::vector<std::pair<Index, double>>& entries, Index i) {
  return std::lower_bound(entries.begin(), entries.end(), i,
                          [](const std::pair<Index, double>& e, Index key) { return e.first < key; });
}

}  // namespace

bool ObservationSet::contains(Index i) const {
  auto it = find_index(entries_, i);
  return it != entries_.end() && it->first == i;
}

double ObservationSet::at(Index i) const {
  auto it = find_index(entries_, i);
  if (it == entries_.end() || it->first != i) {
    fail(ErrorKind::argument, "variable " + std::to_string(i) + " is not observed");
  }
  return it->second;
}

void ObservationSet::insert(Index i, double value) {
  if (i < 0 || i >= dim_) {
    fail(ErrorKind::shape, "observation index " + std::to_string(i) + " outside [0, " + std::to_string(dim_) + ")");
  }
  if (!std::isfinite(value)) fail(ErrorKind::numeric, "observation value for " + std::to_string(i) + " is not finite");
  if (entries_.empty() || entries_.back().first < i) {
    entries_.emplace_back(i, value);
    return;
  }
  auto it = find_index(entries_, i);
  if (it != entries_.end() && it->first == i) {
    fail(ErrorKind::argument, "variable " + std::to_string(i) + " observed twice");
  }
  entries_.emplace(it, i, value);
}

const char* to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::zi: return "zi";
    case EncoderVariant::zi_mask: return "zim";
    case EncoderVariant::pn: return "pn";
    case EncoderVariant::pnp: return "pnp";
  }
  return "?";
}

EncoderVariant variant_from_string(const std::string& s) {
  if (s == "zi") return EncoderVariant::zi;
  if (s == "zim" || s == "zi-m" || s == "zi_m") return EncoderVariant::zi_mask;
  if (s == "pn") return EncoderVariant::pn;
  if (s == "pnp") return EncoderVariant::pnp;
  fail(ErrorKind::config, "unknown encoder variant '" + s + "'", "variant");
}

void EncoderConfig::validate() const {
  if (latent_dim <= 0) fail(ErrorKind::config, "latent dimension must be positive", "latent_dim");
  if (is_set_encoder()) {
    if (recurrent_steps < 1) fail(ErrorKind::config, "recurrent steps must be >= 1", "recurrent_steps");
    if (embedding_dim <= 0) fail(ErrorKind::config, "embedding dimension must be positive", "embedding_dim");
    if (feature_dim <= 0) fail(ErrorKind::config, "feature dimension must be positive", "feature_dim");
  }
  for (Index w : feature_hidden)
    if (w <= 0) fail(ErrorKind::config, "hidden widths must be positive", "feature_hidden");
  for (Index w : inference_hidden)
    if (w <= 0) fail(ErrorKind::config, "hidden widths must be positive", "inference_hidden");
}

Index EncoderConfig::feature_input_width(int step) const {
  const Index base = variant == EncoderVariant::pn ? embedding_dim + 1 : embedding_dim;
  return base + static_cast<Index>(step) * feature_dim;
}

Index EncoderConfig::inference_input_width(Index num_variables) const {
  switch (variant) {
    case EncoderVariant::zi: return num_variables;
    case EncoderVariant::zi_mask: return 2 * num_variables;
    case EncoderVariant::pn:
    case EncoderVariant::pnp: return feature_dim;
  }
  fail(ErrorKind::config, "unknown encoder variant", "variant");
}

EncoderConfig default_encoder_config(EncoderVariant v, Index latent_dim) {
  EncoderConfig c;
  c.variant = v;
  c.latent_dim = latent_dim;
  c.recurrent_steps = v == EncoderVariant::pn ? 5 : 1;
  return c;
}

namespace {

std::vector<Index> widths(Index in, const std::vector<Index>& hidden, Index out) {
  std::vector<Index> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

std::size_t mlp_count(const std::vector<Index>& w) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) n += static_cast<std::size_t>(w[i] * w[i + 1] + w[i + 1]);
  return n;
}

void check_mlp_shape(const MlpParams& p, const std::vector<Index>& w, const std::string& name) {
  if (p.layers.size() + 1 != w.size()) fail(ErrorKind::shape, name + ": layer count mismatch", name);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    if (p.layers[i].in() != w[i] || p.layers[i].out() != w[i + 1]) {
      fail(ErrorKind::shape, name + ".layer" + std::to_string(i) + ": expected " + std::to_string(w[i]) + "x" +
                                 std::to_string(w[i + 1]),
           name + ".layer" + std::to_string(i));
    }
  }
  p.validate(name);
}

}  // namespace

EncoderParams init_encoder(const EncoderConfig& config, Index num_variables, Rng& rng) {
  config.validate();
  if (num_variables <= 0) fail(ErrorKind::config, "encoder needs at least one variable");
  EncoderParams p;
  const Index out = 2 * config.latent_dim;
  if (config.is_set_encoder()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(num_variables + config.embedding_dim));
    p.embeddings.resize(num_variables, config.embedding_dim);
    for (Index c = 0; c < p.embeddings.cols(); ++c)
      for (Index r = 0; r < p.embeddings.rows(); ++r) p.embeddings(r, c) = rng.uniform(-bound, bound);
    for (int t = 0; t < config.recurrent_steps; ++t) {
      auto w = widths(config.feature_input_width(t), config.feature_hidden, config.feature_dim);
      p.feature_nets.push_back(init_mlp(w, Activation::relu, Activation::relu, rng));
    }
  }
  auto w = widths(config.inference_input_width(num_variables), config.inference_hidden, out);
  p.inference_net = init_mlp(w, Activation::relu, Activation::identity, rng);
  return p;
}

std::size_t encoder_param_count(const EncoderConfig& config, Index num_variables) {
  std::size_t n = 0;
  if (config.is_set_encoder()) {
    n += static_cast<std::size_t>(num_variables * config.embedding_dim);
    for (int t = 0; t < config.recurrent_steps; ++t) {
      n += mlp_count(widths(config.feature_input_width(t), config.feature_hidden, config.feature_dim));
    }
  }
  n += mlp_count(widths(config.inference_input_width(num_variables), config.inference_hidden, 2 * config.latent_dim));
  return n;
}

void validate_encoder(const EncoderConfig& config, Index num_variables, const EncoderParams& params) {
  config.validate();
  if (config.is_set_encoder()) {
    if (params.embeddings.rows() != num_variables || params.embeddings.cols() != config.embedding_dim) {
      fail(ErrorKind::shape, "encoder.embeddings: expected " + std::to_string(num_variables) + "x" +
                                 std::to_string(config.embedding_dim),
           "encoder.embeddings");
    }
    if (static_cast<int>(params.feature_nets.size()) != config.recurrent_steps) {
      fail(ErrorKind::shape, "encoder.feature_nets: one network per recurrent step expected", "encoder.feature_nets");
    }
    for (int t = 0; t < config.recurrent_steps; ++t) {
      check_mlp_shape(params.feature_nets[t],
                      widths(config.feature_input_width(t), config.feature_hidden, config.feature_dim),
                      "encoder.feature_net" + std::to_string(t));
    }
  } else if (params.embeddings.size() != 0 || !params.feature_nets.empty()) {
    fail(ErrorKind::shape, "zero-imputation encoders carry no embeddings", "encoder.embeddings");
  }
  check_mlp_shape(params.inference_net,
                  widths(config.inference_input_width(num_variables), config.inference_hidden, 2 * config.latent_dim),
                  "encoder.inference_net");
}

EncoderBatch EncoderBatch::from(std::span<const ObservationSet> sets, Index dim) {
  EncoderBatch b;
  b.rows = static_cast<Index>(sets.size());
  b.dim = dim;
  b.values = Matrix::Zero(b.rows, dim);
  b.mask = Matrix::Zero(b.rows, dim);
  std::size_t pairs = 0;
  for (const auto& s : sets) pairs += s.size();
  b.pair_row.reserve(pairs);
  b.pair_var.reserve(pairs);
  b.pair_value.resize(static_cast<Index>(pairs));
  Index k = 0;
  for (Index r = 0; r < b.rows; ++r) {
    const auto& s = sets[static_cast<std::size_t>(r)];
    if (s.dim() != dim) fail(ErrorKind::shape, "observation set dimension does not match the model");
    for (const auto& [i, v] : s.entries()) {
      b.values(r, i) = v;
      b.mask(r, i) = 1.0;
      b.pair_row.push_back(r);
      b.pair_var.push_back(i);
      b.pair_value[k++] = v;
    }
  }
  return b;
}

EncoderVars bind(ad::Tape& tape, const EncoderParams& params) {
  EncoderVars v;
  if (params.embeddings.size() != 0) {
    v.embeddings = tape.parameter(params.embeddings);
    v.has_embeddings = true;
  }
  for (const auto& f : params.feature_nets) v.feature_nets.push_back(bind(tape, f));
  v.inference_net = bind(tape, params.inference_net);
  return v;
}

namespace {

// Distinct (variable, value) inputs in sorted order; pair k maps to input index[k].
struct DistinctInputs {
  std::vector<Index> var;
  Vector value;
  std::vector<Index> index;
};

DistinctInputs distinct_inputs(const EncoderBatch& b) {
  const std::size_t pairs = b.pair_var.size();
  std::vector<std::pair<Index, std::uint64_t>> keys(pairs);
  for (std::size_t p = 0; p < pairs; ++p) {
    keys[p] = {b.pair_var[p], std::bit_cast<std::uint64_t>(b.pair_value[static_cast<Index>(p)])};
  }
  std::vector<std::size_t> order(pairs);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return keys[x] < keys[y]; });
  DistinctInputs d;
  d.index.resize(pairs);
  std::vector<double> values;
  for (std::size_t r = 0; r < pairs; ++r) {
    const std::size_t p = order[r];
    if (r == 0 || keys[p] != keys[order[r - 1]]) {
      d.var.push_back(b.pair_var[p]);
      values.push_back(b.pair_value[static_cast<Index>(p)]);
    }
    d.index[p] = static_cast<Index>(d.var.size()) - 1;
  }
  d.value = Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
  return d;
}

}  // namespace

GaussianVars encode(const EncoderConfig& config, const EncoderVars& vars, const EncoderBatch& batch) {
  using namespace ad;
  Tape& tape = *vars.inference_net.weights.front().tape;
  Var code;
  switch (config.variant) {
    case EncoderVariant::zi:
      code = tape.constant(batch.values);
      break;
    case EncoderVariant::zi_mask: {
      Matrix in(batch.rows, 2 * batch.dim);
      in << batch.values, batch.mask;
      code = tape.constant(std::move(in));
      break;
    }
    case EncoderVariant::pn:
    case EncoderVariant::pnp: {
      if (!vars.has_embeddings) fail(ErrorKind::config, "set encoder requires embeddings", "encoder.embeddings");
      // the first step sees only (variable, value), so each distinct input is evaluated once
      const DistinctInputs in = distinct_inputs(batch);
      Var e = gather_rows(vars.embeddings, in.var);
      Var s = config.variant == EncoderVariant::pn ? concat_cols(e, tape.constant(Matrix(in.value)))
                                                   : scale_rows(e, in.value);
      std::vector<Eigen::Triplet<double>> member;
      member.reserve(in.index.size());
      for (std::size_t k = 0; k < in.index.size(); ++k) member.emplace_back(batch.pair_row[k], in.index[k], 1.0);
      SparseMatrix rows_by_input(batch.rows, static_cast<Index>(in.var.size()));
      rows_by_input.setFromTriplets(member.begin(), member.end());
      code = sparse_matmul(rows_by_input, mlp_forward(vars.feature_nets.front(), s));
      if (config.recurrent_steps > 1) s = gather_rows(s, in.index);
      for (int t = 1; t < config.recurrent_steps; ++t) {
        s = concat_cols(s, gather_rows(code, batch.pair_row));
        Var features = mlp_forward(vars.feature_nets[static_cast<std::size_t>(t)], s);
        code = segment_sum(features, batch.pair_row, batch.rows);
      }
      break;
    }
  }
  Var out = mlp_forward(vars.inference_net, code);
  const Index h = config.latent_dim;
  GaussianVars g;
  g.mean = slice_cols(out, 0, h);
  g.log_var = clamp(slice_cols(out, h, h), kLogVarMin, kLogVarMax);
  g.variance = ad::exp(g.log_var);
  return g;
}

GaussianBatch encode_batch(const EncoderConfig& config, const EncoderParams& params,
                           std::span<const ObservationSet> sets) {
  const Index dim = config.is_set_encoder() ? params.embeddings.rows()
                                            : (config.variant == EncoderVariant::zi ? params.inference_net.in()
                                                                                    : params.inference_net.in() / 2);
  ad::Tape tape(false);
  EncoderVars vars = bind(tape, params);
  EncoderBatch batch = EncoderBatch::from(sets, dim);
  GaussianVars g = encode(config, vars, batch);
  return GaussianBatch{g.mean.value(), g.variance.value()};
}

DiagonalGaussian encode(const EncoderConfig& config, const EncoderParams& params, const ObservationSet& obs) {
  GaussianBatch b = encode_batch(config, params, std::span<const ObservationSet>(&obs, 1));
  return b.row(0);
}

}  // namespace eddi
