#include "eddi/partial_vae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "eddi/error.hpp"

namespace eddi {

// ---- schema ----

void VariableSchema::validate() const {
  if (variables.empty()) fail(ErrorKind::config, "schema has no variables", "variables");
  std::set<std::string> names;
  bool any_target = false;
  for (const auto& v : variables) {
    if (v.name.empty()) fail(ErrorKind::config, "variable without a name", "name");
    if (!names.insert(v.name).second) fail(ErrorKind::config, "duplicate variable '" + v.name + "'", v.name);
    if (v.kind == VariableKind::continuous && !(v.min < v.max)) {
      fail(ErrorKind::config, "variable '" + v.name + "' needs min < max", v.name);
    }
    any_target = any_target || v.target;
  }
  if (!any_target) fail(ErrorKind::config, "schema needs at least one target variable", "target");
}

std::vector<Index> VariableSchema::targets() const {
  std::vector<Index> out;
  for (Index i = 0; i < size(); ++i)
    if (variables[static_cast<std::size_t>(i)].target) out.push_back(i);
  return out;
}

std::vector<Index> VariableSchema::selectable() const {
  std::vector<Index> out;
  for (Index i = 0; i < size(); ++i)
    if (!variables[static_cast<std::size_t>(i)].target) out.push_back(i);
  return out;
}

int VariableSchema::group_of(Index i) const {
  const int g = variables[static_cast<std::size_t>(i)].group;
  return g < 0 ? static_cast<int>(i) : g;
}

std::vector<std::pair<int, std::vector<Index>>> VariableSchema::groups() const {
  std::map<int, std::vector<Index>> m;
  for (Index i = 0; i < size(); ++i) m[group_of(i)].push_back(i);
  return {m.begin(), m.end()};
}

std::size_t VariableSchema::continuous_count() const {
  return static_cast<std::size_t>(std::count_if(variables.begin(), variables.end(),
                                                [](const Variable& v) { return v.kind == VariableKind::continuous; }));
}

std::size_t VariableSchema::binary_count() const { return variables.size() - continuous_count(); }

nlohmann::json to_json(const VariableSchema& s) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : s.variables) {
    nlohmann::json j{{"name", v.name},
                     {"kind", v.kind == VariableKind::continuous ? "continuous" : "binary"},
                     {"group", v.group},
                     {"target", v.target}};
    if (v.kind == VariableKind::continuous) {
      j["min"] = v.min;
      j["max"] = v.max;
    }
    vars.push_back(std::move(j));
  }
  return nlohmann::json{{"variables", std::move(vars)}};
}

VariableSchema schema_from_json(const nlohmann::json& j) {
  VariableSchema s;
  try {
    for (const auto& v : j.at("variables")) {
      Variable var;
      var.name = v.at("name").get<std::string>();
      const std::string kind = v.value("kind", "continuous");
      if (kind == "continuous") {
        var.kind = VariableKind::continuous;
      } else if (kind == "binary") {
        var.kind = VariableKind::binary;
      } else {
        fail(ErrorKind::config, "unknown variable kind '" + kind + "'", var.name);
      }
      var.group = v.value("group", -1);
      var.target = v.value("target", false);
      var.min = v.value("min", 0.0);
      var.max = v.value("max", 1.0);
      s.variables.push_back(std::move(var));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("malformed schema: ") + e.what(), "schema");
  }
  return s;
}

// ---- model config ----

ModelConfig tabular_config(EncoderVariant v) {
  ModelConfig c;
  c.encoder = default_encoder_config(v, 10);
  c.encoder.embedding_dim = 10;
  c.encoder.feature_dim = 20;
  c.encoder.inference_hidden = {100, 50};
  c.decoder_hidden = {50, 100};
  return c;
}

ModelConfig image_config(EncoderVariant v) {
  ModelConfig c;
  c.encoder = default_encoder_config(v, 20);
  c.encoder.embedding_dim = 20;
  c.encoder.feature_dim = 500;
  c.encoder.inference_hidden = {500, 200};
  if (v == EncoderVariant::zi || v == EncoderVariant::zi_mask) c.encoder.inference_hidden = {500, 500, 200};
  c.decoder_hidden = {200, 500};
  return c;
}

nlohmann::json to_json(const ModelConfig& c) {
  const auto& e = c.encoder;
  return nlohmann::json{{"encoder",
                         {{"variant", to_string(e.variant)},
                          {"recurrent_steps", e.recurrent_steps},
                          {"embedding_dim", e.embedding_dim},
                          {"feature_dim", e.feature_dim},
                          {"latent_dim", e.latent_dim},
                          {"feature_hidden", e.feature_hidden},
                          {"inference_hidden", e.inference_hidden}}},
                        {"decoder_hidden", c.decoder_hidden},
                        {"variance_floor", c.variance_floor}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    const auto& e = j.at("encoder");
    c.encoder.variant = variant_from_string(e.at("variant").get<std::string>());
    c.encoder.recurrent_steps = e.at("recurrent_steps").get<int>();
    c.encoder.embedding_dim = e.at("embedding_dim").get<Index>();
    c.encoder.feature_dim = e.at("feature_dim").get<Index>();
    c.encoder.latent_dim = e.at("latent_dim").get<Index>();
    c.encoder.feature_hidden = e.at("feature_hidden").get<std::vector<Index>>();
    c.encoder.inference_hidden = e.at("inference_hidden").get<std::vector<Index>>();
    c.decoder_hidden = j.at("decoder_hidden").get<std::vector<Index>>();
    c.variance_floor = j.at("variance_floor").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("malformed model config: ") + e.what(), "config");
  }
  return c;
}

// ---- model ----

Index PartialVae::decoder_width() const {
  return static_cast<Index>(2 * schema.continuous_count() + schema.binary_count());
}

Index PartialVae::decoder_column(Index i) const {
  Index col = 0;
  for (Index d = 0; d < i; ++d) col += schema.variables[static_cast<std::size_t>(d)].kind == VariableKind::continuous ? 2 : 1;
  return col;
}

void PartialVae::validate() const {
  schema.validate();
  validate_encoder(config.encoder, num_variables(), encoder);
  decoder.validate("decoder");
  if (decoder.layers.empty() || decoder.in() != latent_dim()) {
    fail(ErrorKind::shape, "decoder input width must equal the latent dimension", "decoder.layer0");
  }
  if (decoder.out() != decoder_width()) {
    fail(ErrorKind::shape, "decoder output width must be 2*continuous + binary", "decoder.output");
  }
  if (!(config.variance_floor > 0.0)) fail(ErrorKind::config, "variance floor must be positive", "variance_floor");
}

PartialVae make_model(VariableSchema schema, ModelConfig config, Rng& rng) {
  schema.validate();
  PartialVae m;
  m.schema = std::move(schema);
  m.config = std::move(config);
  m.encoder = init_encoder(m.config.encoder, m.num_variables(), rng);
  std::vector<Index> w{m.latent_dim()};
  w.insert(w.end(), m.config.decoder_hidden.begin(), m.config.decoder_hidden.end());
  w.push_back(m.decoder_width());
  m.decoder = init_mlp(w, Activation::relu, Activation::identity, rng);
  return m;
}

namespace {

template <typename Model, typename Ptr>
std::vector<std::pair<std::string, Ptr>> collect(Model& model) {
  std::vector<std::pair<std::string, Ptr>> out;
  auto add_mlp = [&out](auto& mlp, const std::string& name) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
      out.emplace_back(name + ".layer" + std::to_string(i) + ".weight", &mlp.layers[i].weight);
      out.emplace_back(name + ".layer" + std::to_string(i) + ".bias", &mlp.layers[i].bias);
    }
  };
  if (model.encoder.embeddings.size() != 0) out.emplace_back("encoder.embeddings", &model.encoder.embeddings);
  for (std::size_t t = 0; t < model.encoder.feature_nets.size(); ++t) {
    add_mlp(model.encoder.feature_nets[t], "encoder.feature_net" + std::to_string(t));
  }
  add_mlp(model.encoder.inference_net, "encoder.inference_net");
  add_mlp(model.decoder, "decoder");
  return out;
}

// Tape leaves in the same order as collect().
std::vector<ad::Var> collect_vars(const EncoderVars& enc, const MlpVars& dec) {
  std::vector<ad::Var> out;
  auto add_mlp = [&out](const MlpVars& m) {
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
      out.push_back(m.weights[i]);
      out.push_back(m.biases[i]);
    }
  };
  if (enc.has_embeddings) out.push_back(enc.embeddings);
  for (const auto& f : enc.feature_nets) add_mlp(f);
  add_mlp(enc.inference_net);
  add_mlp(dec);
  return out;
}

struct ColumnLayout {
  std::vector<Index> cont_vars, cont_mean_cols, cont_lv_cols;
  std::vector<Index> bin_vars, bin_cols;
};

ColumnLayout layout(const PartialVae& model) {
  ColumnLayout l;
  Index col = 0;
  for (Index d = 0; d < model.num_variables(); ++d) {
    if (model.schema.variables[static_cast<std::size_t>(d)].kind == VariableKind::continuous) {
      l.cont_vars.push_back(d);
      l.cont_mean_cols.push_back(col);
      l.cont_lv_cols.push_back(col + 1);
      col += 2;
    } else {
      l.bin_vars.push_back(d);
      l.bin_cols.push_back(col);
      col += 1;
    }
  }
  return l;
}

Matrix select_cols(const Matrix& m, const std::vector<Index>& cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = m.col(cols[k]);
  return out;
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> parameters(PartialVae& model) {
  return collect<PartialVae, Matrix*>(model);
}

std::vector<std::pair<std::string, const Matrix*>> parameters(const PartialVae& model) {
  return collect<const PartialVae, const Matrix*>(model);
}

// ---- likelihood ----

DecodedBatch decode(const PartialVae& model, const Matrix& z) {
  const Matrix out = mlp_forward_batch(model.decoder, z);
  const ColumnLayout l = layout(model);
  DecodedBatch d{Matrix(z.rows(), model.num_variables()), Matrix(z.rows(), model.num_variables())};
  for (std::size_t k = 0; k < l.cont_vars.size(); ++k) {
    d.mean.col(l.cont_vars[k]) = out.col(l.cont_mean_cols[k]);
    d.variance.col(l.cont_vars[k]) =
        (out.col(l.cont_lv_cols[k]).array().max(kLogVarMin).min(kLogVarMax).exp() + model.config.variance_floor)
            .matrix();
  }
  for (std::size_t k = 0; k < l.bin_vars.size(); ++k) {
    for (Index r = 0; r < z.rows(); ++r) {
      const double p = stable_sigmoid(out(r, l.bin_cols[k]));
      d.mean(r, l.bin_vars[k]) = p;
      d.variance(r, l.bin_vars[k]) = p * (1.0 - p);
    }
  }
  return d;
}

Vector log_likelihood(const PartialVae& model, const Matrix& z, const Matrix& values, const Matrix& mask) {
  ad::Tape tape(false);
  MlpVars dec = bind(tape, model.decoder);
  return log_likelihood(model, dec, tape.constant(z), values, mask).value().col(0);
}

ad::Var log_likelihood(const PartialVae& model, const MlpVars& decoder, ad::Var z, const Matrix& values,
                       const Matrix& mask) {
  using namespace ad;
  if (values.cols() != model.num_variables() || mask.cols() != model.num_variables() || values.rows() != z.rows() ||
      mask.rows() != z.rows()) {
    fail(ErrorKind::shape, "log_likelihood: value/mask shape does not match the model");
  }
  Tape& tape = *z.tape;
  const ColumnLayout l = layout(model);
  Var out = mlp_forward(decoder, z);
  Var total = tape.constant(Matrix::Zero(z.rows(), 1));
  if (!l.cont_vars.empty()) {
    Var mean = gather_cols(out, l.cont_mean_cols);
    Var var = add_scalar(ad::exp(clamp(gather_cols(out, l.cont_lv_cols), kLogVarMin, kLogVarMax)),
                         model.config.variance_floor);
    Var x = tape.constant(select_cols(values, l.cont_vars));
    Var ll = mul_const(gaussian_log_density(x, mean, var), select_cols(mask, l.cont_vars));
    total = add(total, row_sum(ll));
  }
  if (!l.bin_vars.empty()) {
    Var logits = gather_cols(out, l.bin_cols);
    Var x = tape.constant(select_cols(values, l.bin_vars));
    Var ll = mul_const(bernoulli_log_density_logits(x, logits), select_cols(mask, l.bin_vars));
    total = add(total, row_sum(ll));
  }
  return total;
}

ad::Var partial_elbo(const PartialVae& model, const EncoderVars& encoder, const MlpVars& decoder,
                     const EncoderBatch& batch, const Matrix& noise) {
  using namespace ad;
  if (noise.rows() != batch.rows || noise.cols() != model.latent_dim()) {
    fail(ErrorKind::shape, "partial_elbo: one noise row of width H per observation set expected");
  }
  GaussianVars q = encode(model.config.encoder, encoder, batch);
  Tape& tape = *q.mean.tape;
  Var eps = tape.constant(noise);
  Var z = gaussian_sample(q.mean, q.variance, eps);
  Var ll = log_likelihood(model, decoder, z, batch.values, batch.mask);
  // log N(z; 0, I) - log q(z|x_O); (z - mu)^2 / var == eps^2 under the reparameterization.
  Var log_prior = scale(row_sum(add_scalar(square(z), kLog2Pi)), -0.5);
  Var eps_sq = tape.constant(noise.array().square().matrix());
  Var log_q = scale(row_sum(add_scalar(add(q.log_var, eps_sq), kLog2Pi)), -0.5);
  return add(ll, sub(log_prior, log_q));
}

Vector partial_elbo_batch(const PartialVae& model, std::span<const ObservationSet> sets, const Matrix& noise) {
  ad::Tape tape(false);
  EncoderVars enc = bind(tape, model.encoder);
  MlpVars dec = bind(tape, model.decoder);
  EncoderBatch batch = EncoderBatch::from(sets, model.num_variables());
  return partial_elbo(model, enc, dec, batch, noise).value().col(0);
}

double partial_elbo(const PartialVae& model, const ObservationSet& obs, const Vector& noise) {
  Matrix n = noise.transpose();
  return partial_elbo_batch(model, std::span<const ObservationSet>(&obs, 1), n)[0];
}

// ---- training ----

ObservationSet observed_cells(const Matrix& rows, Index r) {
  ObservationSet o(rows.cols());
  for (Index d = 0; d < rows.cols(); ++d)
    if (!std::isnan(rows(r, d))) o.insert(d, rows(r, d));
  return o;
}

TrainResult train(PartialVae model, const Matrix& rows, const TrainConfig& config, const ProgressSink& progress) {
  model.validate();
  if (rows.rows() == 0) fail(ErrorKind::config, "training set is empty", "data");
  if (rows.cols() != model.num_variables()) fail(ErrorKind::shape, "training rows do not match the schema width");
  if (config.batch_size < 1) fail(ErrorKind::config, "batch size must be >= 1", "batch_size");
  if (config.missing_rate_max < 0.0 || config.missing_rate_max > 1.0) {
    fail(ErrorKind::config, "missing rate support must lie within [0, 1]", "missing_rate_max");
  }
  TrainResult result{std::move(model), {}};
  PartialVae& m = result.model;
  auto named = parameters(m);
  std::vector<Matrix*> ptrs;
  std::vector<std::string> names;
  std::vector<Matrix> init;
  for (auto& [n, p] : named) {
    names.push_back(n);
    ptrs.push_back(p);
    init.push_back(*p);
  }
  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  AdamState state = make_adam_state(init, adam);
  init.clear();

  Rng rng(config.seed);
  const Index n_rows = rows.rows();
  const Index d = rows.cols();
  const Index h = m.latent_dim();
  std::vector<ObservationSet> sets(static_cast<std::size_t>(config.batch_size));
  Matrix noise(config.batch_size, h);
  result.elbo_trace.reserve(static_cast<std::size_t>(std::max<long>(config.iterations, 0)));

  for (long it = 0; it < config.iterations; ++it) {
    const double rate = config.missing_rate_max > 0.0 ? rng.uniform(0.0, config.missing_rate_max) : 0.0;
    for (Index b = 0; b < config.batch_size; ++b) {
      const Index r = static_cast<Index>(rng.index(static_cast<std::size_t>(n_rows)));
      ObservationSet o(d);
      for (Index j = 0; j < d; ++j) {
        const double v = rows(r, j);
        if (std::isnan(v)) continue;
        if (rate > 0.0 && rng.uniform() < rate) continue;
        o.insert(j, v);
      }
      sets[static_cast<std::size_t>(b)] = std::move(o);
    }
    for (Index b = 0; b < config.batch_size; ++b)
      for (Index k = 0; k < h; ++k) noise(b, k) = rng.normal();

    ad::Tape tape;
    EncoderVars enc = bind(tape, m.encoder);
    MlpVars dec = bind(tape, m.decoder);
    EncoderBatch batch = EncoderBatch::from(sets, d);
    ad::Var elbo = ad::mean(partial_elbo(m, enc, dec, batch, noise));
    const double value = elbo.value()(0, 0);
    if (!std::isfinite(value)) {
      fail(ErrorKind::numeric, "non-finite training loss at iteration " + std::to_string(it), "iteration");
    }
    tape.backward(ad::neg(elbo));
    std::vector<ad::Var> vars = collect_vars(enc, dec);
    std::vector<Matrix> grads;
    grads.reserve(vars.size());
    for (const auto& v : vars) grads.push_back(tape.grad(v));
    adam_update(ptrs, grads, state, names);
    result.elbo_trace.push_back(value);
    if (progress) progress(it, value);
  }
  return result;
}

// ---- conditional inference ----

namespace {

Matrix latent_draws(const DiagonalGaussian& q, Index n, Rng& rng) {
  Matrix z(n, q.dim());
  for (Index s = 0; s < n; ++s)
    for (Index k = 0; k < q.dim(); ++k) z(s, k) = q.mean[k] + std::sqrt(q.variance[k]) * rng.normal();
  return z;
}

}  // namespace

Matrix sample_conditional(const PartialVae& model, const ObservationSet& obs, std::span<const Index> query, Index n,
                          Rng& rng) {
  for (Index i : query) {
    if (i < 0 || i >= model.num_variables()) fail(ErrorKind::shape, "query index out of range");
    if (obs.contains(i)) fail(ErrorKind::argument, "query variable " + std::to_string(i) + " is already observed");
  }
  Matrix out(n, static_cast<Index>(query.size()));
  if (n == 0) return out;
  const DiagonalGaussian q = encode(model.config.encoder, model.encoder, obs);
  const Matrix z = latent_draws(q, n, rng);
  const DecodedBatch dec = decode(model, z);
  for (Index s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < query.size(); ++k) {
      const Index i = query[k];
      if (model.schema.variables[static_cast<std::size_t>(i)].kind == VariableKind::continuous) {
        out(s, static_cast<Index>(k)) = dec.mean(s, i) + std::sqrt(dec.variance(s, i)) * rng.normal();
      } else {
        out(s, static_cast<Index>(k)) = rng.bernoulli(dec.mean(s, i)) ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

Imputation impute(const PartialVae& model, const ObservationSet& obs, Rng& rng, Index n) {
  Imputation out;
  for (Index i = 0; i < model.num_variables(); ++i)
    if (!obs.contains(i)) out.variables.push_back(i);
  const Index k = static_cast<Index>(out.variables.size());
  out.mean = Vector::Zero(k);
  out.variance = Vector::Zero(k);
  if (k == 0 || n <= 0) return out;
  const DiagonalGaussian q = encode(model.config.encoder, model.encoder, obs);
  const DecodedBatch dec = decode(model, latent_draws(q, n, rng));
  for (Index j = 0; j < k; ++j) {
    const Index i = out.variables[static_cast<std::size_t>(j)];
    const double m = dec.mean.col(i).mean();
    // Law of total variance over the latent draws.
    const double second = (dec.variance.col(i).array() + dec.mean.col(i).array().square()).mean();
    out.mean[j] = m;
    out.variance[j] = std::max(second - m * m, 0.0);
    if (model.schema.variables[static_cast<std::size_t>(i)].kind == VariableKind::binary) out.variance[j] = m * (1.0 - m);
  }
  return out;
}

double predictive_log_likelihood(const PartialVae& model, const ObservationSet& obs,
                                 std::span<const std::pair<Index, double>> targets, Index n, Rng& rng) {
  if (n < 1) fail(ErrorKind::argument, "predictive likelihood needs at least one sample");
  std::vector<std::pair<Index, double>> sorted(targets.begin(), targets.end());
  std::sort(sorted.begin(), sorted.end());
  Matrix values = Matrix::Zero(n, model.num_variables());
  Matrix mask = Matrix::Zero(n, model.num_variables());
  for (const auto& [i, v] : sorted) {
    if (i < 0 || i >= model.num_variables()) fail(ErrorKind::shape, "target index out of range");
    values.col(i).setConstant(v);
    mask.col(i).setOnes();
  }
  const DiagonalGaussian q = encode(model.config.encoder, model.encoder, obs);
  const Matrix z = latent_draws(q, n, rng);
  const Vector ll = log_likelihood(model, z, values, mask);
  return log_sum_exp(std::span<const double>(ll.data(), static_cast<std::size_t>(ll.size()))) -
         std::log(static_cast<double>(n));
}

}  // namespace eddi
