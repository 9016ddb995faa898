#pragma once

#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "eddi/autodiff.hpp"
#include "eddi/rng.hpp"

namespace eddi {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)
inline constexpr double kBernoulliClamp = 1e-7;
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

struct DiagonalGaussian {
  Vector mean;
  Vector variance;

  Index dim() const { return mean.size(); }
  // Throws numeric error on non-positive variance, shape error on length mismatch.
  void validate() const;
};

// mean + sqrt(variance) * noise.
Vector gaussian_sample(const DiagonalGaussian& dist, const Vector& noise);
// Same, on the tape (differentiable in mean and variance).
ad::Var gaussian_sample(ad::Var mean, ad::Var variance, ad::Var noise);

// KL(q || p) between diagonal Gaussians, summed over coordinates.
double gaussian_kl(const DiagonalGaussian& q, const DiagonalGaussian& p);

double gaussian_log_density(double value, double mean, double variance);
// Probability is clamped to [1e-7, 1 - 1e-7] before the log.
double bernoulli_log_density(double value, double probability);

// Elementwise log N(x; mean, variance) on the tape.
ad::Var gaussian_log_density(ad::Var x, ad::Var mean, ad::Var variance);
// Elementwise Bernoulli log-pmf from logits (clamped probability).
ad::Var bernoulli_log_density_logits(ad::Var x, ad::Var logits);

double log_sum_exp(std::span<const double> values);

// ---- multilayer perceptrons ----

enum class Activation { relu, identity, sigmoid };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
  Activation activation = Activation::identity;

  Index in() const { return weight.rows(); }
  Index out() const { return weight.cols(); }
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  Index in() const { return layers.empty() ? 0 : layers.front().in(); }
  Index out() const { return layers.empty() ? 0 : layers.back().out(); }
  std::size_t param_count() const;
  // Checks layer chaining and finiteness.
  void validate(const std::string& name) const;
};

// Glorot-uniform weights, zero biases. `widths` = {in, h1, ..., out}; hidden
// layers use `hidden`, the last layer uses `output`.
MlpParams init_mlp(std::span<const Index> widths, Activation hidden, Activation output, Rng& rng);

// Deterministic forward pass for one input vector.
Vector mlp_forward(const MlpParams& params, const Vector& input);
// Batched forward pass (rows are inputs), no tape.
Matrix mlp_forward_batch(const MlpParams& params, const Matrix& input);

// Parameters of an MLP bound to a tape as leaves.
struct MlpVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
  std::vector<Activation> activations;
};

MlpVars bind(ad::Tape& tape, const MlpParams& params);
ad::Var mlp_forward(const MlpVars& vars, ad::Var input);
ad::Var activate(ad::Var x, Activation a);

// ---- Adam ----

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  long step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

AdamState make_adam_state(std::span<const Matrix> params, AdamConfig config = {});

// In-place update. `names` (optional) label parameters in error messages.
void adam_update(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
                 std::span<const std::string> names = {});

struct AdamResult {
  std::vector<Matrix> params;
  AdamState state;
};

// Pure form: returns the updated parameters and state.
AdamResult adam_step(std::vector<Matrix> params, std::span<const Matrix> grads, AdamState state);

}  // namespace eddi
