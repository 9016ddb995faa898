#pragma once

// Set encoders mapping a partially observed vector to q(z | x_O).

#include <span>
#include <string>
#include <vector>

#include "eddi/autodiff.hpp"
#include "eddi/numerics.hpp"
#include "eddi/rng.hpp"

namespace eddi {

// Sparse observed subset of a D-dimensional vector. Entries iterate in
// ascending index order regardless of insertion order.
class ObservationSet {
 public:
  ObservationSet() = default;
  explicit ObservationSet(Index dim) : dim_(dim) {}

  Index dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool contains(Index i) const;
  double at(Index i) const;

  // Throws on out-of-range index, duplicate index or non-finite value.
  void insert(Index i, double value);
  ObservationSet with(Index i, double value) const {
    ObservationSet o = *this;
    o.insert(i, value);
    return o;
  }

  // (index, value) in ascending index order.
  const std::vector<std::pair<Index, double>>& entries() const noexcept { return entries_; }

  friend bool operator==(const ObservationSet&, const ObservationSet&) = default;

 private:
  Index dim_ = 0;
  std::vector<std::pair<Index, double>> entries_;
};

enum class EncoderVariant { zi, zi_mask, pn, pnp };

const char* to_string(EncoderVariant v);
// Accepts "zi", "zim", "zi-m", "pn", "pnp".
EncoderVariant variant_from_string(const std::string& s);

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::pnp;
  int recurrent_steps = 1;   // ignored by zi / zi_mask
  Index embedding_dim = 10;  // M
  Index feature_dim = 20;    // K
  Index latent_dim = 10;     // H
  std::vector<Index> feature_hidden;            // hidden widths inside each h_(t)
  std::vector<Index> inference_hidden{100, 50};  // hidden widths of the post-aggregation net

  void validate() const;
  bool is_set_encoder() const { return variant == EncoderVariant::pn || variant == EncoderVariant::pnp; }
  // Input width of the step-t feature network (t counts from 0).
  Index feature_input_width(int step) const;
  // Input width of the inference network for D variables.
  Index inference_input_width(Index num_variables) const;
};

// Defaults per variant: PN uses 5 recurrent steps, PNP one.
EncoderConfig default_encoder_config(EncoderVariant v, Index latent_dim = 10);

struct EncoderParams {
  Matrix embeddings;                 // D x M; empty for zi / zi_mask
  std::vector<MlpParams> feature_nets;  // one per recurrent step
  MlpParams inference_net;           // -> 2H (mean, log-variance)
};

EncoderParams init_encoder(const EncoderConfig& config, Index num_variables, Rng& rng);
std::size_t encoder_param_count(const EncoderConfig& config, Index num_variables);
// Shapes of `params` must agree with `config`; names the first offending field.
void validate_encoder(const EncoderConfig& config, Index num_variables, const EncoderParams& params);

// Observation sets flattened for a batched forward pass. Pairs are ordered by
// (row, variable index).
struct EncoderBatch {
  Index rows = 0;
  Index dim = 0;
  Matrix values;  // rows x dim, zero where unobserved
  Matrix mask;    // rows x dim
  std::vector<Index> pair_row;
  std::vector<Index> pair_var;
  Vector pair_value;

  static EncoderBatch from(std::span<const ObservationSet> sets, Index dim);
};

struct EncoderVars {
  ad::Var embeddings;
  bool has_embeddings = false;
  std::vector<MlpVars> feature_nets;
  MlpVars inference_net;
};

EncoderVars bind(ad::Tape& tape, const EncoderParams& params);

struct GaussianVars {
  ad::Var mean;      // rows x H
  ad::Var log_var;   // clamped
  ad::Var variance;  // exp(log_var)
};

GaussianVars encode(const EncoderConfig& config, const EncoderVars& vars, const EncoderBatch& batch);

// Evaluation without gradients.
DiagonalGaussian encode(const EncoderConfig& config, const EncoderParams& params, const ObservationSet& obs);

struct GaussianBatch {
  Matrix mean;      // rows x H
  Matrix variance;  // rows x H

  DiagonalGaussian row(Index r) const {
    return DiagonalGaussian{mean.row(r).transpose(), variance.row(r).transpose()};
  }
};

GaussianBatch encode_batch(const EncoderConfig& config, const EncoderParams& params,
                           std::span<const ObservationSet> sets);

}  // namespace eddi
