#include "eddi/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eddi/error.hpp"

namespace eddi {

void DiagonalGaussian::validate() const {
  if (mean.size() != variance.size()) fail(ErrorKind::shape, "gaussian mean/variance length mismatch");
  for (Index j = 0; j < variance.size(); ++j) {
    if (!(variance[j] > 0.0) || !std::isfinite(variance[j])) {
      fail(ErrorKind::numeric, "gaussian variance must be positive and finite", "variance");
    }
  }
}

Vector gaussian_sample(const DiagonalGaussian& dist, const Vector& noise) {
  if (noise.size() != dist.mean.size() || dist.variance.size() != dist.mean.size()) {
    fail(ErrorKind::shape, "gaussian_sample: noise length does not match distribution");
  }
  return dist.mean + (dist.variance.array().sqrt() * noise.array()).matrix();
}

ad::Var gaussian_sample(ad::Var mean, ad::Var variance, ad::Var noise) {
  return ad::add(mean, ad::mul(ad::sqrt(variance), noise));
}

double gaussian_kl(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  if (q.dim() != p.dim()) fail(ErrorKind::shape, "gaussian_kl: dimension mismatch");
  q.validate();
  p.validate();
  double kl = 0.0;
  for (Index j = 0; j < q.dim(); ++j) {
    const double d = q.mean[j] - p.mean[j];
    kl += 0.5 * (q.variance[j] / p.variance[j] + d * d / p.variance[j] - 1.0 +
                 std::log(p.variance[j] / q.variance[j]));
  }
  return kl;
}

double gaussian_log_density(double value, double mean, double variance) {
  if (!(variance > 0.0)) fail(ErrorKind::numeric, "gaussian_log_density: non-positive variance");
  const double d = value - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + d * d / variance);
}

double bernoulli_log_density(double value, double probability) {
  const double p = std::clamp(probability, kBernoulliClamp, 1.0 - kBernoulliClamp);
  return value * std::log(p) + (1.0 - value) * std::log1p(-p);
}

ad::Var gaussian_log_density(ad::Var x, ad::Var mean, ad::Var variance) {
  using namespace ad;
  Var sq = div(square(sub(x, mean)), variance);
  return scale(add_scalar(add(log(variance), sq), kLog2Pi), -0.5);
}

ad::Var bernoulli_log_density_logits(ad::Var x, ad::Var logits) {
  using namespace ad;
  Var p = clamp(sigmoid(logits), kBernoulliClamp, 1.0 - kBernoulliClamp);
  Var one_minus_x = add_scalar(neg(x), 1.0);
  Var one_minus_p = add_scalar(neg(p), 1.0);
  return add(mul(x, log(p)), mul(one_minus_x, log(one_minus_p)));
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

// ---- MLP ----

const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  if (s == "sigmoid") return Activation::sigmoid;
  fail(ErrorKind::config, "unknown activation '" + s + "'", "activation");
}

std::size_t MlpParams::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpParams::validate(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string field = name + ".layer" + std::to_string(i);
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) fail(ErrorKind::shape, field + ": bias width mismatch", field);
    if (i > 0 && layers[i - 1].out() != l.in()) fail(ErrorKind::shape, field + ": layer widths do not chain", field);
    if (!l.weight.allFinite() || !l.bias.allFinite()) fail(ErrorKind::numeric, field + ": non-finite weights", field);
  }
}

MlpParams init_mlp(std::span<const Index> widths, Activation hidden, Activation output, Rng& rng) {
  if (widths.size() < 2) fail(ErrorKind::config, "init_mlp needs at least input and output widths");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const Index in = widths[i];
    const Index out = widths[i + 1];
    if (in <= 0 || out <= 0) fail(ErrorKind::config, "init_mlp: layer widths must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer l;
    l.weight.resize(in, out);
    for (Index c = 0; c < out; ++c)
      for (Index r = 0; r < in; ++r) l.weight(r, c) = rng.uniform(-bound, bound);
    l.bias = Matrix::Zero(1, out);
    l.activation = (i + 2 == widths.size()) ? output : hidden;
    p.layers.push_back(std::move(l));
  }
  return p;
}

namespace {

void activate_inplace(Matrix& x, Activation a) {
  switch (a) {
    case Activation::relu: x = x.cwiseMax(0.0); break;
    case Activation::identity: break;
    case Activation::sigmoid:
      x = x.unaryExpr([](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
      break;
  }
}

}  // namespace

Matrix mlp_forward_batch(const MlpParams& params, const Matrix& input) {
  if (params.layers.empty()) return input;
  if (input.cols() != params.in()) {
    fail(ErrorKind::shape, "mlp_forward: input width " + std::to_string(input.cols()) + " != " +
                               std::to_string(params.in()));
  }
  Matrix x = input;
  for (const auto& l : params.layers) {
    Matrix y = x * l.weight;
    y.rowwise() += l.bias.row(0);
    activate_inplace(y, l.activation);
    x = std::move(y);
  }
  return x;
}

Vector mlp_forward(const MlpParams& params, const Vector& input) {
  Matrix row = input.transpose();
  Matrix out = mlp_forward_batch(params, row);
  return out.row(0).transpose();
}

MlpVars bind(ad::Tape& tape, const MlpParams& params) {
  MlpVars v;
  for (const auto& l : params.layers) {
    v.weights.push_back(tape.parameter(l.weight));
    v.biases.push_back(tape.parameter(l.bias));
    v.activations.push_back(l.activation);
  }
  return v;
}

ad::Var activate(ad::Var x, Activation a) {
  switch (a) {
    case Activation::relu: return ad::relu(x);
    case Activation::identity: return x;
    case Activation::sigmoid: return ad::sigmoid(x);
  }
  return x;
}

ad::Var mlp_forward(const MlpVars& vars, ad::Var input) {
  ad::Var x = input;
  for (std::size_t i = 0; i < vars.weights.size(); ++i) {
    x = activate(ad::add_row(ad::matmul(x, vars.weights[i]), vars.biases[i]), vars.activations[i]);
  }
  return x;
}

// ---- Adam ----

AdamState make_adam_state(std::span<const Matrix> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.first_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
    s.second_moment.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  return s;
}

void adam_update(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
                 std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    fail(ErrorKind::shape, "adam: parameter/gradient/state counts differ");
  }
  auto label = [&](std::size_t i) { return i < names.size() ? names[i] : "param" + std::to_string(i); };
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols() ||
        state.first_moment[i].rows() != params[i]->rows() || state.first_moment[i].cols() != params[i]->cols()) {
      fail(ErrorKind::shape, "adam: gradient shape differs for " + label(i), label(i));
    }
    if (!grads[i].allFinite()) fail(ErrorKind::numeric, "adam: non-finite gradient for " + label(i), label(i));
  }
  const auto& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() -= c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
  }
}

AdamResult adam_step(std::vector<Matrix> params, std::span<const Matrix> grads, AdamState state) {
  std::vector<Matrix*> ptrs;
  for (auto& p : params) ptrs.push_back(&p);
  adam_update(ptrs, grads, state);
  return AdamResult{std::move(params), std::move(state)};
}

}  // namespace eddi
