#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "checks.hpp"
#include "eddi/error.hpp"
#include "eddi/numerics.hpp"

using namespace eddi;

namespace {

MlpParams single_layer(Matrix w, Activation a) {
  MlpParams p;
  DenseLayer l;
  l.bias = Matrix::Zero(1, w.cols());
  l.weight = std::move(w);
  l.activation = a;
  p.layers.push_back(l);
  return p;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(MlpForward, IdentityLayer) {
  const Vector y = mlp_forward(single_layer(Matrix::Identity(2, 2), Activation::identity), vec({1, 2}));
  EXPECT_EQ(y, vec({1, 2}));
}

TEST(MlpForward, ReluClampsNegatives) {
  const Vector y = mlp_forward(single_layer(Matrix::Identity(2, 2), Activation::relu), vec({-3, 4}));
  EXPECT_EQ(y, vec({0, 4}));
}

TEST(MlpForward, TwoLayerMatchesHandRolledProduct) {
  Rng rng(7);
  const std::vector<Index> widths{2, 3, 1};
  MlpParams p = init_mlp(widths, Activation::relu, Activation::identity, rng);
  for (auto& l : p.layers)
    for (Index k = 0; k < l.bias.size(); ++k) l.bias(k) = rng.uniform(-0.3, 0.3);
  const double x[2] = {0.4, -1.3};
  double hidden[3];
  for (int j = 0; j < 3; ++j) {
    double s = p.layers[0].bias(0, j);
    for (int i = 0; i < 2; ++i) s += x[i] * p.layers[0].weight(i, j);
    hidden[j] = s > 0 ? s : 0;
  }
  double out = p.layers[1].bias(0, 0);
  for (int j = 0; j < 3; ++j) out += hidden[j] * p.layers[1].weight(j, 0);
  EXPECT_NEAR(mlp_forward(p, vec({0.4, -1.3}))(0), out, 1e-12);
}

TEST(MlpForward, WidthMismatchIsShapeError) {
  try {
    mlp_forward(single_layer(Matrix::Identity(2, 2), Activation::identity), vec({1, 2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(Grad, SumGivesOnes) {
  ad::Tape t;
  ad::Var th = t.parameter(Matrix::Random(3, 2));
  t.backward(ad::sum(th));
  EXPECT_TRUE(t.grad(th).isApprox(Matrix::Ones(3, 2)));
}

TEST(Grad, HalfSquaredNorm) {
  ad::Tape t;
  Matrix v(1, 2);
  v << 1, -2;
  ad::Var th = t.parameter(v);
  t.backward(ad::scale(ad::sum(ad::square(th)), 0.5));
  EXPECT_EQ(t.grad(th), v);
}

TEST(Grad, OpaquePrimitiveIsCapabilityError) {
  ad::Tape t;
  ad::Var th = t.parameter(Matrix::Ones(1, 1));
  ad::Var y = ad::apply_opaque(th, [](double x) { return std::floor(x); }, "floor");
  try {
    t.backward(ad::sum(y));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability);
  }
}

TEST(Grad, FiniteDifferenceSuite) {
  const auto reports = check::gradient_suite(11, 100, 20);
  for (const auto& r : reports) {
    EXPECT_EQ(r.passed, r.instances) << r.op << " worst relative error " << r.worst;
    EXPECT_LT(r.worst, check::kFdTolerance) << r.op;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Matrix theta = Matrix::Zero(1, 1);
  std::vector<Matrix> grads{Matrix::Ones(1, 1)};
  AdamState s = make_adam_state(std::span<const Matrix>(&theta, 1));
  auto r = adam_step({theta}, grads, s);
  EXPECT_NEAR(r.params[0](0, 0), -0.001, 1e-10);
  EXPECT_EQ(r.state.step, 1);
}

TEST(Adam, ZeroGradientLeavesParams) {
  Matrix theta = Matrix::Random(2, 3);
  AdamState s = make_adam_state(std::span<const Matrix>(&theta, 1));
  for (int k = 0; k < 3; ++k) {
    auto r = adam_step({theta}, std::vector<Matrix>{Matrix::Zero(2, 3)}, s);
    EXPECT_EQ(r.params[0], theta);
    s = r.state;
  }
}

TEST(Adam, IdenticalParametersStayIdentical) {
  Matrix a = Matrix::Constant(1, 1, 0.3);
  std::vector<Matrix> params{a, a};
  std::vector<Matrix> grads{Matrix::Constant(1, 1, -0.7), Matrix::Constant(1, 1, -0.7)};
  AdamState s = make_adam_state(params);
  auto r = adam_step(params, grads, s);
  EXPECT_EQ(r.params[0], r.params[1]);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Matrix p = Matrix::Zero(1, 1);
  Matrix* ptr = &p;
  std::vector<Matrix> grads{Matrix::Constant(1, 1, std::nan(""))};
  AdamState s = make_adam_state(std::span<const Matrix>(&p, 1));
  std::vector<std::string> names{"decoder.w0"};
  try {
    adam_update(std::span<Matrix* const>(&ptr, 1), grads, s, names);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_EQ(e.field(), "decoder.w0");
  }
}

TEST(GaussianSample, ZeroNoiseGivesMean) {
  DiagonalGaussian d{vec({1, -2}), vec({0.5, 3})};
  EXPECT_EQ(gaussian_sample(d, Vector::Zero(2)), d.mean);
}

TEST(GaussianSample, StandardNormalPassesNoise) {
  DiagonalGaussian d{Vector::Zero(3), Vector::Ones(3)};
  const Vector n = vec({0.3, -1.1, 2.0});
  EXPECT_EQ(gaussian_sample(d, n), n);
}

TEST(GaussianSample, EmpiricalMean) {
  DiagonalGaussian d{vec({1}), vec({0.25})};
  Rng rng(3);
  double s = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) s += gaussian_sample(d, vec({rng.normal()}))(0);
  EXPECT_NEAR(s / n, 1.0, 0.02);
}

TEST(GaussianSample, LengthMismatch) {
  DiagonalGaussian d{vec({1}), vec({0.25})};
  EXPECT_THROW(gaussian_sample(d, Vector::Zero(2)), Error);
}

TEST(GaussianKl, Identical) {
  DiagonalGaussian q{Vector::Zero(1), Vector::Ones(1)};
  EXPECT_EQ(gaussian_kl(q, q), 0.0);
}

TEST(GaussianKl, UnitShift) {
  DiagonalGaussian q{vec({1}), Vector::Ones(1)};
  DiagonalGaussian p{vec({0}), Vector::Ones(1)};
  EXPECT_NEAR(gaussian_kl(q, p), 0.5, 1e-15);
}

TEST(GaussianKl, MatchesMonteCarlo) {
  Rng rng(5);
  DiagonalGaussian q{Vector(4), Vector(4)}, p{Vector(4), Vector(4)};
  for (Index j = 0; j < 4; ++j) {
    q.mean(j) = rng.uniform(-1, 1);
    p.mean(j) = rng.uniform(-1, 1);
    q.variance(j) = rng.uniform(0.3, 2);
    p.variance(j) = rng.uniform(0.3, 2);
  }
  const int n = 1000000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    double lq = 0.0, lp = 0.0;
    for (Index j = 0; j < 4; ++j) {
      const double z = q.mean(j) + std::sqrt(q.variance(j)) * rng.normal();
      lq += gaussian_log_density(z, q.mean(j), q.variance(j));
      lp += gaussian_log_density(z, p.mean(j), p.variance(j));
    }
    s += lq - lp;
    s2 += (lq - lp) * (lq - lp);
  }
  const double mean = s / n;
  const double se = std::sqrt((s2 / n - mean * mean) / n);
  EXPECT_NEAR(gaussian_kl(q, p), mean, 3 * se);
}

TEST(GaussianKl, NonNegativeAndNonPositiveVarianceRejected) {
  Rng rng(9);
  for (int k = 0; k < 200; ++k) {
    DiagonalGaussian q{Vector(3), Vector(3)}, p{Vector(3), Vector(3)};
    for (Index j = 0; j < 3; ++j) {
      q.mean(j) = rng.normal();
      p.mean(j) = rng.normal();
      q.variance(j) = rng.uniform(0.01, 4);
      p.variance(j) = rng.uniform(0.01, 4);
    }
    EXPECT_GT(gaussian_kl(q, p), 0.0);
  }
  DiagonalGaussian bad{Vector::Zero(1), Vector::Zero(1)};
  DiagonalGaussian ok{Vector::Zero(1), Vector::Ones(1)};
  try {
    gaussian_kl(bad, ok);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
}

TEST(LogDensity, Values) {
  EXPECT_DOUBLE_EQ(bernoulli_log_density(1.0, 0.5), std::log(0.5));
  EXPECT_DOUBLE_EQ(gaussian_log_density(0.0, 0.0, 1.0), -0.5 * std::log(2 * std::numbers::pi));
  const double v = 0.04, d = 0.5 - 0.3;
  const double expected = -std::log(std::sqrt(2 * std::numbers::pi * v)) - d * d / (2 * v);
  EXPECT_NEAR(gaussian_log_density(0.5, 0.3, 0.04), expected, 1e-12);
  EXPECT_DOUBLE_EQ(bernoulli_log_density(1.0, 0.0), std::log(1e-7));
  EXPECT_TRUE(std::isfinite(bernoulli_log_density(0.0, 1.0)));
}

TEST(Purity, RepeatedEvaluationIsBitIdentical) {
  Rng a(21), b(21);
  const std::vector<Index> widths{4, 8, 3};
  MlpParams pa = init_mlp(widths, Activation::relu, Activation::sigmoid, a);
  MlpParams pb = init_mlp(widths, Activation::relu, Activation::sigmoid, b);
  const Vector x = vec({0.1, 0.2, -0.3, 0.9});
  EXPECT_EQ(mlp_forward(pa, x), mlp_forward(pb, x));
}
