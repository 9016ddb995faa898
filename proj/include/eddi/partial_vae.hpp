#pragma once

// Partial VAE: factorized decoder p(x|z) = prod_d p_d(x_d|z), a set encoder
// q(z|x_O), and the partial variational bound trained under random masking.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eddi/encoder.hpp"
#include "eddi/numerics.hpp"
#include "eddi/rng.hpp"

namespace eddi {

enum class VariableKind { continuous, binary };

struct Variable {
  std::string name;
  VariableKind kind = VariableKind::continuous;
  int group = -1;  // -1: a singleton group keyed by the variable index
  double min = 0.0;
  double max = 1.0;
  bool target = false;
};

struct VariableSchema {
  std::vector<Variable> variables;

  Index size() const { return static_cast<Index>(variables.size()); }
  void validate() const;
  std::vector<Index> targets() const;
  // Non-target variables, ascending.
  std::vector<Index> selectable() const;
  int group_of(Index i) const;
  // Group id -> member variables (ascending), groups ordered by id.
  std::vector<std::pair<int, std::vector<Index>>> groups() const;
  std::size_t continuous_count() const;
  std::size_t binary_count() const;
};

nlohmann::json to_json(const VariableSchema& s);
VariableSchema schema_from_json(const nlohmann::json& j);

struct ModelConfig {
  EncoderConfig encoder;
  std::vector<Index> decoder_hidden{50, 100};
  double variance_floor = 1e-4;
};

// Tabular preset: H=10, decoder 10-50-100-D, encoder D-100-50-2H, K=20, M=10.
ModelConfig tabular_config(EncoderVariant v);
// Image preset: H=20, decoder 20-200-500-D, encoder D-500-500-200-2H.
ModelConfig image_config(EncoderVariant v);

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct PartialVae {
  VariableSchema schema;
  ModelConfig config;
  EncoderParams encoder;
  MlpParams decoder;

  Index num_variables() const { return schema.size(); }
  Index latent_dim() const { return config.encoder.latent_dim; }
  // Decoder output width: 2 per continuous variable, 1 per binary one.
  Index decoder_width() const;
  // First decoder column of variable i (mean, or logit for binary).
  Index decoder_column(Index i) const;

  void validate() const;
};

PartialVae make_model(VariableSchema schema, ModelConfig config, Rng& rng);

// Named references to every trainable array, in a fixed order.
std::vector<std::pair<std::string, Matrix*>> parameters(PartialVae& model);
std::vector<std::pair<std::string, const Matrix*>> parameters(const PartialVae& model);

// ---- likelihood ----

struct DecodedBatch {
  Matrix mean;      // rows x D (probability for binary variables)
  Matrix variance;  // rows x D (p(1-p) for binary variables)
};

DecodedBatch decode(const PartialVae& model, const Matrix& z);

// Sum over observed cells of log p(x_d | z), per row. `mask` selects cells.
Vector log_likelihood(const PartialVae& model, const Matrix& z, const Matrix& values, const Matrix& mask);

// The same on a tape: decoder output -> rows x 1.
ad::Var log_likelihood(const PartialVae& model, const MlpVars& decoder, ad::Var z, const Matrix& values,
                       const Matrix& mask);

// Single-sample bound per row: log p(x_O|z) + log p(z) - log q(z|x_O) with
// z = mu + sigma * noise. Rows x 1.
ad::Var partial_elbo(const PartialVae& model, const EncoderVars& encoder, const MlpVars& decoder,
                     const EncoderBatch& batch, const Matrix& noise);

double partial_elbo(const PartialVae& model, const ObservationSet& obs, const Vector& noise);
Vector partial_elbo_batch(const PartialVae& model, std::span<const ObservationSet> sets, const Matrix& noise);

// ---- training ----

struct TrainConfig {
  long iterations = 3000;
  Index batch_size = 100;
  double learning_rate = 0.001;
  double missing_rate_max = 0.7;  // missing rate ~ U(0, missing_rate_max) per batch
  std::uint64_t seed = 0;
};

struct TrainResult {
  PartialVae model;
  std::vector<double> elbo_trace;  // mean bound per iteration
};

using ProgressSink = std::function<void(long iteration, double elbo)>;

// Rows hold scaled values with NaN marking natively missing cells.
TrainResult train(PartialVae model, const Matrix& rows, const TrainConfig& config, const ProgressSink& progress = {});

// Natively observed cells of a row as an observation set.
ObservationSet observed_cells(const Matrix& rows, Index r);

// ---- conditional inference ----

// n x |query| draws of the queried variables under z ~ q(z|x_O), x ~ p(x|z).
Matrix sample_conditional(const PartialVae& model, const ObservationSet& obs, std::span<const Index> query,
                          Index n, Rng& rng);

struct Imputation {
  std::vector<Index> variables;
  Vector mean;
  Vector variance;
};

inline constexpr Index kDefaultImputeSamples = 50;

// Predictive moments of every unobserved variable.
Imputation impute(const PartialVae& model, const ObservationSet& obs, Rng& rng, Index n = kDefaultImputeSamples);

// log (1/n) sum_m prod_t p(x_t | z_m), z_m ~ q(z|x_O).
double predictive_log_likelihood(const PartialVae& model, const ObservationSet& obs,
                                 std::span<const std::pair<Index, double>> targets, Index n, Rng& rng);

}  // namespace eddi
