#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <cstdio>
#include <cstdlib>
#include <numeric>

#include "eddi/format.hpp"

namespace eddi::check {

using ad::Tape;
using ad::Var;

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-2});
}

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Values in [lo, hi] kept at least `gap` away from every point in `kinks`.
Matrix away_from(Index r, Index c, Rng& rng, double lo, double hi, std::vector<double> kinks, double gap) {
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j) {
    for (Index i = 0; i < r; ++i) {
      double v = 0.0;
      do {
        v = rng.uniform(lo, hi);
      } while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(v - k) < gap; }));
      m(i, j) = v;
    }
  }
  return m;
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Gradient of loss = sum(out .* weights) with respect to every input.
bool check_instance(const std::vector<Matrix>& inputs, const Builder& build, GradOpReport& report, Rng& rng) {
  Matrix weights;
  auto loss_of = [&](Tape& tape, const std::vector<Var>& vars) {
    Var out = build(tape, vars);
    if (weights.size() == 0) weights = random_matrix(out.rows(), out.cols(), rng, 0.5, 1.5);
    return ad::sum(ad::mul_const(out, weights));
  };
  Tape tape;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(tape.parameter(m));
  Var loss = loss_of(tape, vars);
  tape.backward(loss);

  bool ok = true;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    const Matrix g = tape.grad(vars[p]);
    for (Index k = 0; k < inputs[p].size(); ++k) {
      auto eval = [&](double delta) {
        std::vector<Matrix> shifted = inputs;
        shifted[p](k) += delta;
        Tape t(false);
        std::vector<Var> vs;
        for (const auto& m : shifted) vs.push_back(t.constant(m));
        return loss_of(t, vs).value()(0, 0);
      };
      const double fd = (eval(kFdStep) - eval(-kFdStep)) / (2.0 * kFdStep);
      const double err = relative_error(g(k), fd);
      report.worst = std::max(report.worst, err);
      ++report.coordinates;
      if (!(err < kFdTolerance)) {
        ok = false;
        if (std::getenv("EDDI_GRAD_DEBUG")) std::fprintf(stderr, "%s p%zu k%ld g=%g fd=%g\n", report.op.c_str(), p, (long)k, g(k), fd);
      }
    }
  }
  ++report.instances;
  if (ok) ++report.passed;
  return ok;
}

struct OpCase {
  std::string name;
  std::function<std::vector<Matrix>(Rng&)> inputs;
  std::function<Var(Tape&, const std::vector<Var>&, Rng&)> build;
};

Index dim(Rng& rng) { return 1 + static_cast<Index>(rng.index(4)); }

std::vector<OpCase> primitive_cases() {
  std::vector<OpCase> cases;
  auto two = [](double lo, double hi) {
    return [lo, hi](Rng& rng) {
      const Index r = dim(rng), c = dim(rng);
      return std::vector<Matrix>{random_matrix(r, c, rng, lo, hi), random_matrix(r, c, rng, lo, hi)};
    };
  };
  auto one = [](double lo, double hi) {
    return [lo, hi](Rng& rng) { return std::vector<Matrix>{random_matrix(dim(rng), dim(rng), rng, lo, hi)}; };
  };
  cases.push_back({"add", two(-2, 2), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::add(v[0], v[1]); }});
  cases.push_back({"sub", two(-2, 2), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::sub(v[0], v[1]); }});
  cases.push_back({"mul", two(-2, 2), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::mul(v[0], v[1]); }});
  cases.push_back({"div", two(0.5, 2), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::div(v[0], v[1]); }});
  cases.push_back({"neg", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::neg(v[0]); }});
  cases.push_back({"scale", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng& rng) {
                     return ad::scale(v[0], rng.uniform(-3, 3));
                   }});
  cases.push_back({"add_scalar", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng& rng) {
                     return ad::add_scalar(v[0], rng.uniform(-3, 3));
                   }});
  cases.push_back({"add_row",
                   [](Rng& rng) {
                     const Index r = dim(rng), c = dim(rng);
                     return std::vector<Matrix>{random_matrix(r, c, rng), random_matrix(1, c, rng)};
                   },
                   [](Tape&, const std::vector<Var>& v, Rng&) { return ad::add_row(v[0], v[1]); }});
  cases.push_back({"mul_const", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng& rng) {
                     return ad::mul_const(v[0], random_matrix(v[0].rows(), v[0].cols(), rng, -2, 2));
                   }});
  cases.push_back({"scale_rows", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng& rng) {
                     return ad::scale_rows(v[0], random_matrix(v[0].rows(), 1, rng, -2, 2).col(0));
                   }});
  cases.push_back({"matmul",
                   [](Rng& rng) {
                     const Index r = dim(rng), k = dim(rng), c = dim(rng);
                     return std::vector<Matrix>{random_matrix(r, k, rng), random_matrix(k, c, rng)};
                   },
                   [](Tape&, const std::vector<Var>& v, Rng&) { return ad::matmul(v[0], v[1]); }});
  cases.push_back({"relu", [](Rng& rng) { return std::vector<Matrix>{away_from(dim(rng), dim(rng), rng, -2, 2, {0.0}, 1e-3)}; },
                   [](Tape&, const std::vector<Var>& v, Rng&) { return ad::relu(v[0]); }});
  cases.push_back({"sigmoid", one(-4, 4), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::sigmoid(v[0]); }});
  cases.push_back({"exp", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::exp(v[0]); }});
  cases.push_back({"log", one(0.2, 3), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::log(v[0]); }});
  cases.push_back({"sqrt", one(0.2, 3), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::sqrt(v[0]); }});
  cases.push_back({"square", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::square(v[0]); }});
  cases.push_back({"clamp", [](Rng& rng) { return std::vector<Matrix>{away_from(dim(rng), dim(rng), rng, -1, 1, {-0.5, 0.5}, 1e-3)}; },
                   [](Tape&, const std::vector<Var>& v, Rng&) { return ad::clamp(v[0], -0.5, 0.5); }});
  cases.push_back({"sum", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::sum(v[0]); }});
  cases.push_back({"mean", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::mean(v[0]); }});
  cases.push_back({"row_sum", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng&) { return ad::row_sum(v[0]); }});
  cases.push_back({"concat_cols",
                   [](Rng& rng) {
                     const Index r = dim(rng);
                     return std::vector<Matrix>{random_matrix(r, dim(rng), rng), random_matrix(r, dim(rng), rng)};
                   },
                   [](Tape&, const std::vector<Var>& v, Rng&) { return ad::concat_cols(v[0], v[1]); }});
  cases.push_back({"slice_cols", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng& rng) {
                     const auto c = static_cast<std::size_t>(v[0].cols());
                     const Index start = static_cast<Index>(rng.index(c));
                     const Index count = 1 + static_cast<Index>(rng.index(c - static_cast<std::size_t>(start)));
                     return ad::slice_cols(v[0], start, count);
                   }});
  cases.push_back({"gather_cols", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng& rng) {
                     std::vector<Index> idx(1 + rng.index(5));
                     for (auto& i : idx) i = static_cast<Index>(rng.index(static_cast<std::size_t>(v[0].cols())));
                     return ad::gather_cols(v[0], idx);
                   }});
  cases.push_back({"gather_rows", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng& rng) {
                     std::vector<Index> idx(1 + rng.index(6));
                     for (auto& i : idx) i = static_cast<Index>(rng.index(static_cast<std::size_t>(v[0].rows())));
                     return ad::gather_rows(v[0], idx);
                   }});
  cases.push_back({"segment_sum", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng& rng) {
                     const Index segments = 1 + static_cast<Index>(rng.index(3));
                     std::vector<Index> seg(static_cast<std::size_t>(v[0].rows()));
                     for (auto& s : seg) s = static_cast<Index>(rng.index(static_cast<std::size_t>(segments)));
                     std::sort(seg.begin(), seg.end());
                     return ad::segment_sum(v[0], seg, segments);
                   }});
  cases.push_back({"sparse_matmul", one(-2, 2), [](Tape&, const std::vector<Var>& v, Rng& rng) {
                     const Index rows = dim(rng);
                     std::vector<Eigen::Triplet<double>> entries;
                     for (Index r = 0; r < rows; ++r)
                       for (Index c = 0; c < v[0].rows(); ++c)
                         if (rng.uniform() < 0.5) entries.emplace_back(r, c, rng.uniform(-2.0, 2.0));
                     SparseMatrix a(rows, v[0].rows());
                     a.setFromTriplets(entries.begin(), entries.end());
                     return ad::sparse_matmul(a, v[0]);
                   }});
  cases.push_back({"gaussian_sample",
                   [](Rng& rng) {
                     const Index r = dim(rng), c = dim(rng);
                     return std::vector<Matrix>{random_matrix(r, c, rng), random_matrix(r, c, rng, 0.1, 2.0)};
                   },
                   [](Tape& t, const std::vector<Var>& v, Rng& rng) {
                     Matrix noise(v[0].rows(), v[0].cols());
                     for (Index k = 0; k < noise.size(); ++k) noise(k) = rng.normal();
                     return gaussian_sample(v[0], v[1], t.constant(noise));
                   }});
  cases.push_back({"gaussian_log_density",
                   [](Rng& rng) {
                     const Index r = dim(rng), c = dim(rng);
                     return std::vector<Matrix>{random_matrix(r, c, rng), random_matrix(r, c, rng),
                                                random_matrix(r, c, rng, 0.1, 2.0)};
                   },
                   [](Tape&, const std::vector<Var>& v, Rng&) { return gaussian_log_density(v[0], v[1], v[2]); }});
  cases.push_back({"bernoulli_log_density_logits", one(-4, 4), [](Tape& t, const std::vector<Var>& v, Rng& rng) {
                     Matrix x(v[0].rows(), v[0].cols());
                     for (Index k = 0; k < x.size(); ++k) x(k) = rng.bernoulli(0.5) ? 1.0 : 0.0;
                     return bernoulli_log_density_logits(t.constant(x), v[0]);
                   }});
  return cases;
}

PartialVae small_model(EncoderVariant variant, Index d, Rng& rng) {
  VariableSchema schema;
  for (Index i = 0; i < d; ++i) {
    Variable v;
    v.name = "x" + std::to_string(i);
    v.kind = i % 3 == 2 ? VariableKind::binary : VariableKind::continuous;
    schema.variables.push_back(v);
  }
  schema.variables.back().target = true;
  ModelConfig cfg;
  cfg.encoder = default_encoder_config(variant, 2);
  cfg.encoder.recurrent_steps = variant == EncoderVariant::pn ? 2 : 1;
  cfg.encoder.embedding_dim = 3;
  cfg.encoder.feature_dim = 4;
  cfg.encoder.inference_hidden = {5};
  cfg.decoder_hidden = {5};
  return make_model(schema, cfg, rng);
}

}  // namespace

std::vector<GradOpReport> gradient_suite(std::uint64_t seed, int instances, int composite_instances) {
  std::vector<GradOpReport> reports;
  std::uint64_t op_key = 0;
  for (const auto& c : primitive_cases()) {
    GradOpReport rep;
    rep.op = c.name;
    for (int k = 0; k < instances; ++k) {
      Rng rng(derive_seed(seed, {op_key, static_cast<std::uint64_t>(k)}));
      const auto inputs = c.inputs(rng);
      const std::uint64_t build_seed = derive_seed(seed, {op_key, static_cast<std::uint64_t>(k), 1});
      Rng weight_rng(derive_seed(seed, {op_key, static_cast<std::uint64_t>(k), 2}));
      // The builder must be deterministic across re-evaluations.
      check_instance(
          inputs,
          [&](Tape& t, const std::vector<Var>& v) {
            Rng r(build_seed);
            return c.build(t, v, r);
          },
          rep, weight_rng);
    }
    reports.push_back(rep);
    ++op_key;
  }

  {
    GradOpReport rep;
    rep.op = "mlp_3_layer";
    for (int k = 0; k < composite_instances; ++k) {
      Rng rng(derive_seed(seed, {op_key, static_cast<std::uint64_t>(k)}));
      const Index in = dim(rng) + 1, h1 = dim(rng) + 1, h2 = dim(rng) + 1, out = dim(rng);
      const std::vector<Index> widths{in, h1, h2, out};
      MlpParams p = init_mlp(widths, Activation::relu, Activation::identity, rng);
      p.layers[1].activation = Activation::sigmoid;
      for (auto& l : p.layers) l.bias = random_matrix(1, l.out(), rng, -0.5, 0.5);
      std::vector<Matrix> inputs{random_matrix(1 + static_cast<Index>(rng.index(3)), in, rng)};
      for (const auto& l : p.layers) {
        inputs.push_back(l.weight);
        inputs.push_back(l.bias);
      }
      Rng weight_rng(derive_seed(seed, {op_key, static_cast<std::uint64_t>(k), 2}));
      check_instance(
          inputs,
          [&](Tape&, const std::vector<Var>& v) {
            MlpVars vars;
            for (std::size_t l = 0; l < p.layers.size(); ++l) {
              vars.weights.push_back(v[1 + 2 * l]);
              vars.biases.push_back(v[2 + 2 * l]);
              vars.activations.push_back(p.layers[l].activation);
            }
            return mlp_forward(vars, v[0]);
          },
          rep, weight_rng);
    }
    reports.push_back(rep);
    ++op_key;
  }

  for (EncoderVariant variant : {EncoderVariant::zi, EncoderVariant::zi_mask, EncoderVariant::pn, EncoderVariant::pnp}) {
    GradOpReport rep;
    rep.op = std::string("partial_elbo_") + to_string(variant);
    for (int k = 0; k < composite_instances; ++k) {
      Rng rng(derive_seed(seed, {op_key, static_cast<std::uint64_t>(k)}));
      const Index d = 3 + static_cast<Index>(rng.index(3));
      PartialVae model = small_model(variant, d, rng);
      const Index rows = 1 + static_cast<Index>(rng.index(3));
      std::vector<ObservationSet> sets;
      for (Index r = 0; r < rows; ++r) {
        ObservationSet s(d);
        for (Index i = 0; i < d; ++i) {
          if (rng.uniform() < 0.6) {
            const bool binary = model.schema.variables[static_cast<std::size_t>(i)].kind == VariableKind::binary;
            s.insert(i, binary ? (rng.bernoulli(0.5) ? 1.0 : 0.0) : rng.uniform());
          }
        }
        sets.push_back(std::move(s));
      }
      Matrix noise(rows, model.latent_dim());
      for (Index q = 0; q < noise.size(); ++q) noise(q) = rng.normal();
      const EncoderBatch batch = EncoderBatch::from(sets, d);

      // Nonzero biases keep empty rows off the relu kink.
      for (auto& [name, m] : parameters(model))
        if (name.find("bias") != std::string::npos) *m = random_matrix(m->rows(), m->cols(), rng, -0.5, 0.5);
      std::vector<Matrix> inputs;
      for (const auto& [name, m] : parameters(model)) inputs.push_back(*m);
      Rng weight_rng(derive_seed(seed, {op_key, static_cast<std::uint64_t>(k), 2}));
      check_instance(
          inputs,
          [&](Tape& t, const std::vector<Var>& v) {
            // Rebind in the order of parameters(model).
            EncoderVars ev;
            std::size_t q = 0;
            if (model.config.encoder.is_set_encoder()) {
              ev.embeddings = v[q++];
              ev.has_embeddings = true;
              for (const auto& f : model.encoder.feature_nets) {
                MlpVars mv;
                for (const auto& l : f.layers) {
                  mv.weights.push_back(v[q++]);
                  mv.biases.push_back(v[q++]);
                  mv.activations.push_back(l.activation);
                }
                ev.feature_nets.push_back(mv);
              }
            }
            for (const auto& l : model.encoder.inference_net.layers) {
              ev.inference_net.weights.push_back(v[q++]);
              ev.inference_net.biases.push_back(v[q++]);
              ev.inference_net.activations.push_back(l.activation);
            }
            MlpVars dv;
            for (const auto& l : model.decoder.layers) {
              dv.weights.push_back(v[q++]);
              dv.biases.push_back(v[q++]);
              dv.activations.push_back(l.activation);
            }
            (void)t;
            return partial_elbo(model, ev, dv, batch, noise);
          },
          rep, weight_rng);
    }
    reports.push_back(rep);
    ++op_key;
  }
  return reports;
}

int permutation_mismatches(EncoderVariant variant, int pairs, std::uint64_t seed) {
  Rng init(derive_seed(seed, {0}));
  const Index d = 8;
  VariableSchema schema;
  for (Index i = 0; i < d; ++i) schema.variables.push_back(Variable{"x" + std::to_string(i)});
  schema.variables.back().target = true;
  ModelConfig cfg = tabular_config(variant);
  const PartialVae model = make_model(schema, cfg, init);
  int mismatches = 0;
  for (int k = 0; k < pairs; ++k) {
    Rng rng(derive_seed(seed, {1, static_cast<std::uint64_t>(k)}));
    std::vector<std::pair<Index, double>> entries;
    for (Index i = 0; i < d; ++i)
      if (rng.uniform() < 0.5) entries.emplace_back(i, rng.uniform());
    ObservationSet a(d);
    for (const auto& [i, v] : entries) a.insert(i, v);
    std::vector<std::pair<Index, double>> shuffled = entries;
    for (std::size_t j = shuffled.size(); j > 1; --j) std::swap(shuffled[j - 1], shuffled[rng.index(j)]);
    ObservationSet b(d);
    for (const auto& [i, v] : shuffled) b.insert(i, v);
    const DiagonalGaussian qa = encode(model.config.encoder, model.encoder, a);
    const DiagonalGaussian qb = encode(model.config.encoder, model.encoder, b);
    const bool same = (qa.mean.array() == qb.mean.array()).all() && (qa.variance.array() == qb.variance.array()).all();
    if (!same) ++mismatches;
  }
  return mismatches;
}

double zi_as_pn_gap(int inputs, std::uint64_t seed) {
  Rng rng(seed);
  const Index d = 6, hidden = 7, h = 2;
  VariableSchema schema;
  for (Index i = 0; i < d; ++i) schema.variables.push_back(Variable{"x" + std::to_string(i)});
  schema.variables.back().target = true;

  EncoderConfig zi;
  zi.variant = EncoderVariant::zi;
  zi.latent_dim = h;
  zi.inference_hidden = {hidden};
  EncoderParams zp = init_encoder(zi, d, rng);
  zp.inference_net.layers[0].activation = Activation::sigmoid;
  zp.inference_net.layers[0].bias.setZero();
  zp.inference_net.layers[1].bias.setZero();

  EncoderConfig pn;
  pn.variant = EncoderVariant::pnp;
  pn.latent_dim = h;
  pn.recurrent_steps = 1;
  pn.embedding_dim = hidden;
  pn.feature_dim = hidden;
  pn.inference_hidden = {hidden};
  EncoderParams pp = init_encoder(pn, d, rng);
  pp.embeddings = zp.inference_net.layers[0].weight;  // e_i = row i of the first ZI layer
  pp.feature_nets[0].layers[0].weight = Matrix::Identity(hidden, hidden);
  pp.feature_nets[0].layers[0].bias.setZero();
  pp.feature_nets[0].layers[0].activation = Activation::identity;
  pp.inference_net.layers[0].weight = Matrix::Identity(hidden, hidden);
  pp.inference_net.layers[0].bias.setZero();
  pp.inference_net.layers[0].activation = Activation::sigmoid;
  pp.inference_net.layers[1] = zp.inference_net.layers[1];

  double gap = 0.0;
  for (int k = 0; k < inputs; ++k) {
    ObservationSet obs(d);
    for (Index i = 0; i < d; ++i) obs.insert(i, rng.uniform(-1.0, 1.0));
    const DiagonalGaussian a = encode(zi, zp, obs);
    const DiagonalGaussian b = encode(pn, pp, obs);
    gap = std::max({gap, (a.mean - b.mean).cwiseAbs().maxCoeff(), (a.variance - b.variance).cwiseAbs().maxCoeff()});
  }
  return gap;
}

void write_planted_dataset(const std::filesystem::path& dir, Index rows, std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  Rng rng(seed);
  std::ofstream csv(dir / "planted.csv");
  csv << "y,a,n1,n2,n3,n4,n5,n6\n";
  for (Index r = 0; r < rows; ++r) {
    const double y = rng.uniform();
    csv << format_double(y) << ',' << format_double(y);
    for (int k = 0; k < 6; ++k) csv << ',' << format_double(rng.uniform());
    csv << '\n';
  }
  std::ofstream schema(dir / "planted.schema.json");
  schema << R"({"variables": [{"name": "y", "kind": "continuous", "target": true}, {"name": "a", "kind": "continuous"},)"
         << R"( {"name": "n1", "kind": "continuous"}, {"name": "n2", "kind": "continuous"}, {"name": "n3", "kind": "continuous"},)"
         << R"( {"name": "n4", "kind": "continuous"}, {"name": "n5", "kind": "continuous"}, {"name": "n6", "kind": "continuous"}]})"
         << '\n';
}

}  // namespace eddi::check
