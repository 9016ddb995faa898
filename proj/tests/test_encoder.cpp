#include <cmath>

#include <gtest/gtest.h>

#include "checks.hpp"
#include "eddi/error.hpp"
#include "eddi/partial_vae.hpp"

using namespace eddi;

namespace {

EncoderConfig tiny_pn() {
  EncoderConfig c;
  c.variant = EncoderVariant::pn;
  c.recurrent_steps = 1;
  c.embedding_dim = 1;
  c.feature_dim = 2;
  c.latent_dim = 1;
  c.inference_hidden = {};
  return c;
}

const EncoderVariant kVariants[] = {EncoderVariant::zi, EncoderVariant::zi_mask, EncoderVariant::pn,
                                    EncoderVariant::pnp};

}  // namespace

TEST(Encoder, EmptySetGivesInferenceNetOfZero) {
  Rng rng(1);
  EncoderConfig c = default_encoder_config(EncoderVariant::pn);
  EncoderParams p = init_encoder(c, 5, rng);
  for (auto& l : p.inference_net.layers) l.bias.setConstant(0.1);
  const DiagonalGaussian q = encode(c, p, ObservationSet(5));
  const Vector out = mlp_forward(p.inference_net, Vector::Zero(c.feature_dim));
  EXPECT_TRUE(q.mean.isApprox(out.head(c.latent_dim), 1e-14));
  EXPECT_TRUE(q.variance.isApprox(out.tail(c.latent_dim).array().exp().matrix(), 1e-14));
  q.validate();
}

TEST(Encoder, HandComputedPnForwardPass) {
  Rng rng(42);
  const EncoderConfig c = tiny_pn();
  EncoderParams p = init_encoder(c, 2, rng);
  for (auto& l : p.feature_nets[0].layers) l.bias << 0.05, -0.02;
  p.inference_net.layers[0].bias << 0.01, -0.03;
  ObservationSet obs(2);
  obs.insert(0, 0.3);
  obs.insert(1, 0.8);

  const auto& h = p.feature_nets[0].layers[0];
  double code[2] = {0, 0};
  const double x[2] = {0.3, 0.8};
  for (int d = 0; d < 2; ++d) {
    const double s[2] = {p.embeddings(d, 0), x[d]};
    for (int k = 0; k < 2; ++k) {
      double a = h.bias(0, k) + s[0] * h.weight(0, k) + s[1] * h.weight(1, k);
      code[k] += a > 0 ? a : 0;
    }
  }
  const auto& g = p.inference_net.layers[0];
  const double mean = g.bias(0, 0) + code[0] * g.weight(0, 0) + code[1] * g.weight(1, 0);
  const double log_var = g.bias(0, 1) + code[0] * g.weight(0, 1) + code[1] * g.weight(1, 1);

  const DiagonalGaussian q = encode(c, p, obs);
  EXPECT_NEAR(q.mean(0), mean, 1e-12);
  EXPECT_NEAR(q.variance(0), std::exp(log_var), 1e-12);
}

TEST(Encoder, ParamCounts) {
  EncoderConfig zi;
  zi.variant = EncoderVariant::zi;
  zi.latent_dim = 1;
  zi.inference_hidden = {4};
  EXPECT_EQ(encoder_param_count(zi, 3), 26u);
  EXPECT_EQ(encoder_param_count(tiny_pn(), 2), 14u);
  Rng rng(0);
  std::size_t counted = 0;
  EncoderParams p = init_encoder(tiny_pn(), 2, rng);
  counted += static_cast<std::size_t>(p.embeddings.size()) + p.feature_nets[0].param_count() +
             p.inference_net.param_count();
  EXPECT_EQ(counted, 14u);
}

TEST(Encoder, DoublingDDoublesOnlyEmbeddings) {
  for (auto v : {EncoderVariant::pn, EncoderVariant::pnp}) {
    const EncoderConfig c = default_encoder_config(v);
    const std::size_t a = encoder_param_count(c, 7), b = encoder_param_count(c, 14);
    EXPECT_EQ(b - a, static_cast<std::size_t>(7 * c.embedding_dim));
  }
}

TEST(Encoder, OutputWidthIndependentOfObservedCount) {
  for (auto v : kVariants) {
    Rng rng(3);
    const EncoderConfig c = default_encoder_config(v, 4);
    const EncoderParams p = init_encoder(c, 6, rng);
    ObservationSet obs(6);
    for (Index i = 0; i <= 6; ++i) {
      const DiagonalGaussian q = encode(c, p, obs);
      EXPECT_EQ(q.dim(), 4);
      q.validate();
      if (i < 6) obs.insert(i, 0.1 * static_cast<double>(i + 1));
    }
  }
}

TEST(Encoder, PermutationInvariance) {
  for (auto v : kVariants) EXPECT_EQ(check::permutation_mismatches(v, 1000, 17), 0) << to_string(v);
}

TEST(Encoder, ZeroImputationOnFullInputIsPlainEncoder) {
  Rng rng(8);
  for (auto v : {EncoderVariant::zi, EncoderVariant::zi_mask}) {
    const EncoderConfig c = default_encoder_config(v, 3);
    const EncoderParams p = init_encoder(c, 4, rng);
    ObservationSet obs(4);
    Vector x(4);
    for (Index i = 0; i < 4; ++i) {
      x(i) = rng.uniform(0.1, 1.0);
      obs.insert(i, x(i));
    }
    Vector in = x;
    if (v == EncoderVariant::zi_mask) {
      in.resize(8);
      in << x, Vector::Ones(4);
    }
    const Vector out = mlp_forward(p.inference_net, in);
    const DiagonalGaussian q = encode(c, p, obs);
    EXPECT_TRUE(q.mean.isApprox(out.head(3), 1e-14));
    EXPECT_TRUE(q.variance.isApprox(out.tail(3).array().exp().matrix(), 1e-14));
  }
}

TEST(Encoder, ZiAsPnConstruction) { EXPECT_LT(check::zi_as_pn_gap(100, 5), 1e-10); }

TEST(Encoder, EmbeddingGradientsOnlyForObserved) {
  for (auto v : {EncoderVariant::pn, EncoderVariant::pnp}) {
    Rng rng(12);
    EncoderConfig c = default_encoder_config(v, 3);
    c.recurrent_steps = v == EncoderVariant::pn ? 3 : 1;
    const EncoderParams p = init_encoder(c, 6, rng);
    ObservationSet a(6), b(6);
    a.insert(1, 0.4);
    a.insert(4, 0.9);
    b.insert(4, 0.2);
    std::vector<ObservationSet> sets{a, b};
    ad::Tape tape;
    EncoderVars vars = bind(tape, p);
    GaussianVars g = encode(c, vars, EncoderBatch::from(sets, 6));
    tape.backward(ad::add(ad::sum(g.mean), ad::sum(g.variance)));
    const Matrix grad = tape.grad(vars.embeddings);
    for (Index d = 0; d < 6; ++d) {
      const bool observed = d == 1 || d == 4;
      if (observed) {
        EXPECT_GT(grad.row(d).cwiseAbs().sum(), 0.0) << d;
      } else {
        EXPECT_EQ(grad.row(d).cwiseAbs().sum(), 0.0) << d;
      }
    }
  }
}

TEST(Encoder, Errors) {
  try {
    variant_from_string("lstm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  ObservationSet obs(3);
  try {
    obs.insert(3, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
  Rng rng(0);
  const EncoderConfig c = default_encoder_config(EncoderVariant::pnp);
  const EncoderParams p = init_encoder(c, 4, rng);
  ObservationSet wrong(5);
  EXPECT_THROW(encode(c, p, wrong), Error);
}
