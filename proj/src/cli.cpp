#include "eddi/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "eddi/checkpoint.hpp"
#include "eddi/dataset.hpp"
#include "eddi/error.hpp"
#include "eddi/experiment.hpp"
#include "eddi/format.hpp"
#include "eddi/inpaint.hpp"
#include "eddi/metrics.hpp"
#include "eddi/oracle_check.hpp"
#include "eddi/session.hpp"

namespace eddi {

namespace fs = std::filesystem;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::numeric: return kExitNumeric;
    case ErrorKind::data:
    case ErrorKind::shape:
    case ErrorKind::evidence:
    case ErrorKind::not_found: return kExitData;
    default: return kExitConfig;
  }
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

nlohmann::json rewards_json(const std::vector<RewardEstimate>& rewards) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : rewards) list.push_back({{"variable", r.candidate}, {"value", r.value}, {"stderr", r.std_error}});
  return list;
}

nlohmann::json prediction_json(const std::vector<TargetPrediction>& p) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : p) list.push_back({{"target", t.variable}, {"mean", t.mean}, {"variance", t.variance}});
  return list;
}

struct TrainArgs {
  std::string data;
  std::string schema;
  std::string variant = "pnp";
  std::string preset = "tabular";
  std::string name = "model";
  std::uint64_t seed = 0;
  long iterations = 3000;
  Index batch_size = 100;
  double learning_rate = 0.001;
  double missing_rate_max = 0.7;
  double test_fraction = 0.1;
  Index latent = 0;
  std::string out = "out";
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const EncoderVariant variant = variant_from_string(a.variant);
  Matrix rows;
  VariableSchema schema;
  ModelConfig cfg;
  nlohmann::json split_info;
  if (a.preset == "image") {
    const Matrix images = load_bitmaps(a.data, 28 * 28);
    auto [train_idx, test_idx] = split_rows(images.rows(), SplitOptions{a.seed, a.test_fraction});
    rows.resize(static_cast<Index>(train_idx.size()), images.cols());
    for (std::size_t k = 0; k < train_idx.size(); ++k) rows.row(static_cast<Index>(k)) = images.row(train_idx[k]);
    schema = image_schema(28, 28);
    cfg = desk_image_config(variant);
    split_info = {{"train", train_idx.size()}, {"test", test_idx.size()}};
  } else if (a.preset == "tabular") {
    if (a.schema.empty()) fail(ErrorKind::config, "--schema is required for tabular data", "schema");
    const Dataset ds = ingest_csv(a.data, load_schema(a.schema), SplitOptions{a.seed, a.test_fraction});
    rows = ds.train_rows();
    schema = ds.schema;
    cfg = tabular_config(variant);
    split_info = {{"train", ds.train_index.size()}, {"test", ds.test_index.size()}, {"test_rows", ds.test_index}};
  } else {
    fail(ErrorKind::config, "unknown preset '" + a.preset + "'", "preset");
  }
  if (a.latent > 0) cfg.encoder.latent_dim = a.latent;
  Rng init(derive_seed(a.seed, {1}));
  PartialVae model = make_model(schema, cfg, init);
  TrainConfig tc;
  tc.iterations = a.iterations;
  tc.batch_size = a.batch_size;
  tc.learning_rate = a.learning_rate;
  tc.missing_rate_max = a.missing_rate_max;
  tc.seed = derive_seed(a.seed, {2});
  const long report_every = std::max(1L, a.iterations / 10);
  TrainResult r = train(std::move(model), rows, tc, [&](long it, double elbo) {
    if (it % report_every == 0) out << "iteration " << it << " elbo " << format_double(elbo) << '\n';
  });
  const fs::path dir = a.out;
  write_file(dir, a.name + ".pvae", serialize(r.model));
  write_file(dir, "loss.csv", loss_csv(r.elbo_trace));
  write_file(dir, "split.json", split_info.dump(2) + "\n");
  nlohmann::json config{{"data", a.data},     {"schema", a.schema},          {"variant", a.variant},
                        {"preset", a.preset}, {"seed", a.seed},              {"iterations", a.iterations},
                        {"batch_size", a.batch_size}, {"learning_rate", a.learning_rate},
                        {"missing_rate_max", a.missing_rate_max}, {"test_fraction", a.test_fraction},
                        {"model", to_json(r.model.config)}};
  write_manifest(dir, "train", config, {a.name + ".pvae", "loss.csv", "split.json"});
  out << "wrote " << (dir / (a.name + ".pvae")).string() << '\n';
  return kExitOk;
}

struct AcquireArgs {
  std::string model;
  std::string data;
  std::string sing_data;
  std::string strategy = "eddi";
  std::vector<Index> rows;
  Index budget = -1;
  Index samples = kDefaultRewardSamples;
  std::uint64_t seed = 0;
  bool grouped = false;
  int threads = 1;
  std::string out = "out";
};

int cmd_acquire(const AcquireArgs& a, std::ostream& out) {
  const PartialVae model = load(a.model);
  const Matrix data = read_scaled(a.data, model.schema);
  Strategy strategy;
  strategy.kind = strategy_from_string(a.strategy);
  strategy.samples = a.samples;
  strategy.threads = a.threads;
  const std::vector<Index> targets = model.schema.targets();
  const auto candidates = a.grouped ? group_candidates(model.schema) : variable_candidates(model.schema);
  if (strategy.kind == StrategyKind::sing) {
    const Matrix pool = a.sing_data.empty() ? data : read_scaled(a.sing_data, model.schema);
    strategy.ordering = single_best_ordering(model, pool, candidates, targets, a.samples, a.seed, a.threads);
  }
  std::vector<Index> rows = a.rows;
  if (rows.empty())
    for (Index r = 0; r < data.rows(); ++r) rows.push_back(r);
  EpisodeOptions opts;
  opts.grouped = a.grouped;
  opts.budget = a.budget;
  opts.likelihood_samples = a.samples;

  std::ostringstream curves;
  curves << "row,step,candidate,cost,cumulative_cost,neg_log_likelihood\n";
  std::ostringstream auics;
  auics << "row,auic\n";
  nlohmann::json episodes = nlohmann::json::array();
  for (Index r : rows) {
    if (r < 0 || r >= data.rows()) fail(ErrorKind::config, "row " + std::to_string(r) + " is out of range", "rows");
    const InfoCurve c = run_episode(model, data.row(r).transpose(), strategy, opts, a.seed);
    nlohmann::json steps = nlohmann::json::array();
    for (std::size_t s = 0; s < c.steps.size(); ++s) {
      const auto& st = c.steps[s];
      curves << r << ',' << s << ',' << st.candidate << ',' << format_double(st.cost) << ','
             << format_double(st.cumulative_cost) << ',' << format_double(st.neg_log_likelihood) << '\n';
      steps.push_back({{"step", s},
                       {"candidate", st.candidate},
                       {"cost", st.cost},
                       {"cumulative_cost", st.cumulative_cost},
                       {"neg_log_likelihood", st.neg_log_likelihood},
                       {"rewards", rewards_json(st.rewards)},
                       {"prediction", prediction_json(st.prediction)}});
    }
    const double value = auic(c, a.grouped);
    auics << r << ',' << format_double(value) << '\n';
    episodes.push_back({{"row", r}, {"steps", steps}, {"unavailable", c.unavailable}, {"auic", value}});
    out << "row " << r << ": " << c.steps.size() - 1 << " acquisitions, AUIC " << format_double(value) << '\n';
  }
  const fs::path dir = a.out;
  write_file(dir, "curves.csv", curves.str());
  write_file(dir, "auic.csv", auics.str());
  write_file(dir, "episodes.json", episodes.dump(2) + "\n");
  std::vector<fs::path> files{"curves.csv", "auic.csv", "episodes.json"};
  if (strategy.kind == StrategyKind::sing) {
    std::ostringstream o;
    o << "position,candidate\n";
    for (std::size_t k = 0; k < strategy.ordering.size(); ++k) o << k << ',' << strategy.ordering[k] << '\n';
    write_file(dir, "sing_order.csv", o.str());
    files.emplace_back("sing_order.csv");
  }
  nlohmann::json config{{"model", a.model},     {"data", a.data},       {"strategy", a.strategy},
                        {"budget", a.budget},   {"samples", a.samples}, {"seed", a.seed},
                        {"grouped", a.grouped}, {"rows", rows},         {"sing_data", a.sing_data}};
  write_manifest(dir, "acquire", config, files);
  return kExitOk;
}

struct InpaintArgs {
  std::string data = "data/tiny_mnist.hex";
  std::string model;
  std::string variant = "pnp";
  std::vector<std::string> masks{"random", "top"};
  std::uint64_t seed = 0;
  long iterations = 3000;
  double test_fraction = 0.1;
  Index samples = 1;
  Index images = 10;
  std::string out = "out";
};

int cmd_inpaint(const InpaintArgs& a, std::ostream& out) {
  const Matrix all = load_bitmaps(a.data, 28 * 28);
  auto [train_idx, test_idx] = split_rows(all.rows(), SplitOptions{a.seed, a.test_fraction});
  auto gather = [&](const std::vector<Index>& idx) {
    Matrix m(static_cast<Index>(idx.size()), all.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) m.row(static_cast<Index>(k)) = all.row(idx[k]);
    return m;
  };
  const fs::path dir = a.out;
  std::vector<fs::path> files;
  PartialVae model;
  nlohmann::json summary;
  if (!a.model.empty()) {
    model = load(a.model);
  } else {
    Rng init(derive_seed(a.seed, {1}));
    model = make_model(image_schema(28, 28), desk_image_config(variant_from_string(a.variant)), init);
    TrainConfig tc;
    tc.iterations = a.iterations;
    tc.seed = derive_seed(a.seed, {2});
    const long every = std::max(1L, a.iterations / 10);
    TrainResult r = train(std::move(model), gather(train_idx), tc, [&](long it, double elbo) {
      if (it % every == 0) out << "iteration " << it << " elbo " << format_double(elbo) << '\n';
    });
    model = std::move(r.model);
    write_file(dir, "model.pvae", serialize(model));
    write_file(dir, "loss.csv", loss_csv(r.elbo_trace));
    files.emplace_back("model.pvae");
    files.emplace_back("loss.csv");
    std::vector<double> tail(r.elbo_trace.end() - std::min<std::ptrdiff_t>(100, static_cast<std::ptrdiff_t>(r.elbo_trace.size())),
                             r.elbo_trace.end());
    summary["train_elbo_last100"] = summarize(tail).mean;
  }
  const Matrix test = gather(test_idx);
  for (const auto& mask_name : a.masks) {
    const MaskMode mode = mask_mode_from_string(mask_name);
    const InpaintReport rep = inpaint_eval(model, test, mode, derive_seed(a.seed, {3}), a.samples);
    const fs::path csv = "report_" + mask_name + ".csv";
    write_file(dir, csv, inpaint_csv(rep));
    files.push_back(csv);
    for (Index k = 0; k < std::min<Index>(a.images, static_cast<Index>(rep.images.size())); ++k) {
      const fs::path pgm = fs::path("recon") / (mask_name + "_" + std::to_string(k) + ".pgm");
      fs::create_directories(dir / "recon");
      write_pgm(dir / pgm, rep.images[static_cast<std::size_t>(k)].reconstruction, 28, 28);
      files.push_back(pgm);
    }
    summary["test_elbo"][mask_name] = {{"mean", rep.mean_elbo}, {"stderr", rep.stderr_elbo}, {"images", rep.images.size()}};
    out << mask_name << " masking: test ELBO " << format_double(rep.mean_elbo) << " (stderr "
        << format_double(rep.stderr_elbo) << ")\n";
  }
  write_file(dir, "summary.json", summary.dump(2) + "\n");
  files.emplace_back("summary.json");
  nlohmann::json config{{"data", a.data},       {"model", a.model},     {"variant", a.variant},
                        {"masks", a.masks},     {"seed", a.seed},       {"iterations", a.iterations},
                        {"test_fraction", a.test_fraction}, {"samples", a.samples}, {"images", a.images}};
  write_manifest(dir, "inpaint", config, files);
  return kExitOk;
}

int cmd_oracle(const OracleCheckOptions& o, const std::string& out_dir, std::ostream& out) {
  const OracleCheckReport r = oracle_check(o);
  out << "models " << r.models << ", triples " << r.triples << '\n'
      << "max |direct - latent| " << format_double(r.max_identity_gap) << '\n'
      << "max |bald - direct| " << format_double(r.max_bald_gap) << '\n'
      << "min reward " << format_double(r.min_reward) << ", min mutual information "
      << format_double(r.min_mutual_information) << '\n'
      << "seconds " << format_double(r.seconds) << '\n';
  if (!out_dir.empty()) {
    nlohmann::json j{{"models", r.models},
                     {"triples", r.triples},
                     {"max_identity_gap", r.max_identity_gap},
                     {"max_bald_gap", r.max_bald_gap},
                     {"min_reward", r.min_reward},
                     {"min_mutual_information", r.min_mutual_information}};
    write_file(out_dir, "oracle.json", j.dump(2) + "\n");
    nlohmann::json config{{"models", o.models},
                          {"max_variables", o.max_variables},
                          {"max_cardinality", o.max_cardinality},
                          {"latent_cardinality", o.latent_cardinality},
                          {"seed", o.seed}};
    write_manifest(out_dir, "oracle-check", config, {"oracle.json"});
  }
  const bool ok = r.max_identity_gap < 1e-10 && r.max_bald_gap < 1e-10 && r.min_reward >= -1e-12 &&
                  r.min_mutual_information >= -1e-12;
  if (!ok) fail(ErrorKind::numeric, "oracle identities violated");
  return kExitOk;
}

struct ServeArgs {
  std::string model_dir;
  std::string bind;
  Index samples = kDefaultRewardSamples;
  int threads = 1;
  std::string out;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  auto registry = std::make_shared<ModelRegistry>();
  const std::string dir = a.model_dir.empty() ? env_or("EDDI_MODEL_DIR", "models") : a.model_dir;
  const std::size_t n = registry->load_directory(dir);
  SessionOptions so;
  so.reward_samples = a.samples;
  so.prediction_samples = a.samples;
  so.threads = a.threads;
  SessionStore store(registry, so);
  ServeOptions opts;
  opts.bind_addr = a.bind.empty() ? env_or("EDDI_BIND_ADDR", "127.0.0.1:8080") : a.bind;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    opts.snapshot = fs::path(a.out) / "sessions.json";
  }
  serve(store, opts, [&](int port) {
    out << "serving " << n << " model(s) from " << dir << " on port " << port << std::endl;
  });
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Partial VAE training and sequential variable acquisition"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a Partial VAE");
  train_cmd->add_option("--data", ta.data, "CSV file (tabular) or bitmap file (image)")->required();
  train_cmd->add_option("--schema", ta.schema, "schema JSON for tabular data");
  train_cmd->add_option("--variant", ta.variant, "encoder: zi, zim, pn, pnp");
  train_cmd->add_option("--preset", ta.preset, "tabular or image");
  train_cmd->add_option("--name", ta.name, "checkpoint file stem");
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--iterations", ta.iterations);
  train_cmd->add_option("--batch-size", ta.batch_size);
  train_cmd->add_option("--learning-rate", ta.learning_rate);
  train_cmd->add_option("--missing-rate-max", ta.missing_rate_max);
  train_cmd->add_option("--test-fraction", ta.test_fraction);
  train_cmd->add_option("--latent", ta.latent, "latent dimension override");
  train_cmd->add_option("--out", ta.out);

  AcquireArgs aa;
  auto* acquire_cmd = app.add_subcommand("acquire", "run acquisition episodes on CSV rows");
  acquire_cmd->add_option("--model", aa.model, ".pvae checkpoint")->required();
  acquire_cmd->add_option("--data", aa.data, "CSV rows to acquire on")->required();
  acquire_cmd->add_option("--sing-data", aa.sing_data, "rows averaged by SING (default: --data)");
  acquire_cmd->add_option("--strategy", aa.strategy, "eddi, rand or sing");
  acquire_cmd->add_option("--rows", aa.rows, "row indices (default: all)")->delimiter(',');
  acquire_cmd->add_option("--budget", aa.budget, "acquisitions per row (negative: all)");
  acquire_cmd->add_option("--samples", aa.samples, "Monte Carlo samples");
  acquire_cmd->add_option("--seed", aa.seed);
  acquire_cmd->add_flag("--grouped", aa.grouped);
  acquire_cmd->add_option("--threads", aa.threads);
  acquire_cmd->add_option("--out", aa.out);

  ExperimentSpec spec;
  std::string spec_file;
  std::vector<std::string> variants;
  std::vector<std::string> strategies;
  std::string exp_out = "out";
  auto* exp_cmd = app.add_subcommand("experiment", "repeated split/train/acquire benchmark");
  exp_cmd->add_option("--spec", spec_file, "experiment JSON; flags override it");
  std::string exp_data, exp_schema;
  exp_cmd->add_option("--data", exp_data);
  exp_cmd->add_option("--schema", exp_schema);
  exp_cmd->add_option("--variant", variants, "comma-separated encoders")->delimiter(',');
  exp_cmd->add_option("--strategy", strategies, "comma-separated strategies")->delimiter(',');
  auto* reps_opt = exp_cmd->add_option("--reps", spec.repetitions);
  auto* seed_opt = exp_cmd->add_option("--seed", spec.seed);
  auto* budget_opt = exp_cmd->add_option("--budget", spec.budget);
  Index exp_samples = 0;
  exp_cmd->add_option("--samples", exp_samples, "reward/likelihood/SING samples");
  long exp_iterations = -1;
  exp_cmd->add_option("--iterations", exp_iterations);
  double exp_fraction = -1.0;
  exp_cmd->add_option("--test-fraction", exp_fraction);
  Index exp_sing_rows = -1, exp_max_test = -1;
  exp_cmd->add_option("--sing-rows", exp_sing_rows);
  exp_cmd->add_option("--max-test-rows", exp_max_test);
  exp_cmd->add_option("--threads", spec.threads);
  exp_cmd->add_option("--out", exp_out);

  InpaintArgs ia;
  auto* inpaint_cmd = app.add_subcommand("inpaint", "image inpainting ELBO report");
  inpaint_cmd->add_option("--data", ia.data, "bitmap file, one 28x28 image per line");
  inpaint_cmd->add_option("--model", ia.model, "evaluate this checkpoint instead of training");
  inpaint_cmd->add_option("--variant", ia.variant);
  inpaint_cmd->add_option("--mask", ia.masks, "none, random, top")->delimiter(',');
  inpaint_cmd->add_option("--seed", ia.seed);
  inpaint_cmd->add_option("--iterations", ia.iterations);
  inpaint_cmd->add_option("--test-fraction", ia.test_fraction);
  inpaint_cmd->add_option("--samples", ia.samples, "ELBO samples per image");
  inpaint_cmd->add_option("--images", ia.images, "reconstructions written as PGM");
  inpaint_cmd->add_option("--out", ia.out);

  OracleCheckOptions oo;
  std::string oracle_out;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "exact identities on random tabular models");
  oracle_cmd->add_option("--reps", oo.models, "number of random models");
  oracle_cmd->add_option("--seed", oo.seed);
  oracle_cmd->add_option("--max-variables", oo.max_variables);
  oracle_cmd->add_option("--max-cardinality", oo.max_cardinality);
  oracle_cmd->add_option("--latent-cardinality", oo.latent_cardinality);
  oracle_cmd->add_option("--out", oracle_out);

  ServeArgs sa;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP session service");
  serve_cmd->add_option("--model-dir", sa.model_dir, "default: $EDDI_MODEL_DIR");
  serve_cmd->add_option("--bind", sa.bind, "host:port, default: $EDDI_BIND_ADDR");
  serve_cmd->add_option("--samples", sa.samples);
  serve_cmd->add_option("--threads", sa.threads);
  serve_cmd->add_option("--out", sa.out, "directory for the session snapshot written on shutdown");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(ta, out);
    if (*acquire_cmd) return cmd_acquire(aa, out);
    if (*exp_cmd) {
      if (!spec_file.empty()) {
        std::ifstream f(spec_file);
        if (!f) fail(ErrorKind::config, "cannot open " + spec_file, "spec");
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
          fail(ErrorKind::config, std::string("spec is not valid JSON: ") + e.what(), "spec");
        }
        const ExperimentSpec loaded = experiment_spec_from_json(j);
        const int threads = spec.threads;
        const auto reps = spec.repetitions;
        const auto seed = spec.seed;
        const auto budget = spec.budget;
        spec = loaded;
        spec.threads = threads;
        if (*reps_opt) spec.repetitions = reps;
        if (*seed_opt) spec.seed = seed;
        if (*budget_opt) spec.budget = budget;
      }
      if (!exp_data.empty()) spec.data = exp_data;
      if (!exp_schema.empty()) spec.schema = exp_schema;
      if (!variants.empty()) {
        spec.variants.clear();
        for (const auto& v : variants) spec.variants.push_back(variant_from_string(v));
      }
      if (!strategies.empty()) {
        spec.strategies.clear();
        for (const auto& s : strategies) spec.strategies.push_back(strategy_from_string(s));
      }
      if (exp_samples > 0) spec.reward_samples = spec.likelihood_samples = spec.sing_samples = exp_samples;
      if (exp_iterations >= 0) spec.train.iterations = exp_iterations;
      if (exp_fraction >= 0.0) spec.test_fraction = exp_fraction;
      if (exp_sing_rows >= 0) spec.sing_rows = exp_sing_rows;
      if (exp_max_test >= 0) spec.max_test_rows = exp_max_test;
      const ExperimentResult r = run_experiment(spec, exp_out, [&](const std::string& s) { out << s << '\n'; });
      for (const auto& [method, means] : r.repetition_means) {
        const MeanStderr ms = summarize(means);
        out << method << ": mean AUIC " << format_double(ms.mean) << " (stderr " << format_double(ms.std_error)
            << ")\n";
      }
      return kExitOk;
    }
    if (*inpaint_cmd) return cmd_inpaint(ia, out);
    if (*oracle_cmd) return cmd_oracle(oo, oracle_out, out);
    if (*serve_cmd) return cmd_serve(sa, out);
  } catch (const Error& e) {
    err << to_string(e.kind()) << ": " << e.what();
    if (!e.field().empty()) err << " [" << e.field() << "]";
    err << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace eddi
