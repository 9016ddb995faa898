#include "eddi/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "eddi/checkpoint.hpp"
#include "eddi/error.hpp"
#include "eddi/format.hpp"
#include "eddi/parallel.hpp"

namespace eddi {

namespace fs = std::filesystem;

void ExperimentSpec::validate() const {
  if (data.empty()) fail(ErrorKind::config, "experiment needs a data file", "data");
  if (schema.empty()) fail(ErrorKind::config, "experiment needs a schema file", "schema");
  if (variants.empty()) fail(ErrorKind::config, "at least one encoder variant is required", "variant");
  if (strategies.empty()) fail(ErrorKind::config, "at least one strategy is required", "strategy");
  if (repetitions < 1) fail(ErrorKind::config, "repetitions must be >= 1", "reps");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail(ErrorKind::config, "test fraction must lie in (0, 1)", "test_fraction");
  if (train.iterations < 0) fail(ErrorKind::config, "iterations must be >= 0", "iterations");
  if (train.batch_size < 1) fail(ErrorKind::config, "batch size must be >= 1", "batch_size");
  if (train.missing_rate_max < 0.0 || train.missing_rate_max > 1.0) {
    fail(ErrorKind::config, "missing rate must lie in [0, 1]", "missing_rate_max");
  }
  if (latent_dim < 1) fail(ErrorKind::config, "latent dimension must be positive", "latent_dim");
  if (reward_samples < 1 || likelihood_samples < 1 || sing_samples < 1) {
    fail(ErrorKind::config, "sample counts must be positive", "samples");
  }
  if (sing_rows < 0 || max_test_rows < 0) fail(ErrorKind::config, "row limits must be >= 0", "rows");
}

nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json variants = nlohmann::json::array();
  for (auto v : s.variants) variants.push_back(to_string(v));
  nlohmann::json strategies = nlohmann::json::array();
  for (auto k : s.strategies) strategies.push_back(to_string(k));
  return nlohmann::json{
      {"data", s.data.generic_string()},
      {"schema", s.schema.generic_string()},
      {"variants", variants},
      {"strategies", strategies},
      {"repetitions", s.repetitions},
      {"test_fraction", s.test_fraction},
      {"train",
       {{"iterations", s.train.iterations},
        {"batch_size", s.train.batch_size},
        {"learning_rate", s.train.learning_rate},
        {"missing_rate_max", s.train.missing_rate_max}}},
      {"latent_dim", s.latent_dim},
      {"reward_samples", s.reward_samples},
      {"likelihood_samples", s.likelihood_samples},
      {"sing_samples", s.sing_samples},
      {"sing_rows", s.sing_rows},
      {"max_test_rows", s.max_test_rows},
      {"budget", s.budget},
      {"grouped", s.grouped},
      {"seed", s.seed},
  };
}

ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
  ExperimentSpec s;
  try {
    if (j.contains("data")) s.data = j.at("data").get<std::string>();
    if (j.contains("schema")) s.schema = j.at("schema").get<std::string>();
    if (j.contains("variants")) {
      s.variants.clear();
      for (const auto& v : j.at("variants")) s.variants.push_back(variant_from_string(v.get<std::string>()));
    }
    if (j.contains("strategies")) {
      s.strategies.clear();
      for (const auto& v : j.at("strategies")) s.strategies.push_back(strategy_from_string(v.get<std::string>()));
    }
    s.repetitions = j.value("repetitions", s.repetitions);
    s.test_fraction = j.value("test_fraction", s.test_fraction);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      s.train.iterations = t.value("iterations", s.train.iterations);
      s.train.batch_size = t.value("batch_size", s.train.batch_size);
      s.train.learning_rate = t.value("learning_rate", s.train.learning_rate);
      s.train.missing_rate_max = t.value("missing_rate_max", s.train.missing_rate_max);
    }
    s.latent_dim = j.value("latent_dim", s.latent_dim);
    s.reward_samples = j.value("reward_samples", s.reward_samples);
    s.likelihood_samples = j.value("likelihood_samples", s.likelihood_samples);
    s.sing_samples = j.value("sing_samples", s.sing_samples);
    s.sing_rows = j.value("sing_rows", s.sing_rows);
    s.max_test_rows = j.value("max_test_rows", s.max_test_rows);
    s.budget = j.value("budget", s.budget);
    s.grouped = j.value("grouped", s.grouped);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("malformed experiment spec: ") + e.what(), "spec");
  }
  return s;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ExperimentSpec& spec) { return fnv1a_hex(to_json(spec).dump()); }

std::string method_name(EncoderVariant v, StrategyKind s) { return std::string(to_string(v)) + "/" + to_string(s); }

void write_file(const fs::path& out, const fs::path& relative, const std::string& bytes) {
  const fs::path full = out / relative;
  fs::create_directories(full.parent_path());
  std::ofstream f(full, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::data, "cannot write " + full.string(), "out");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::data, "write failed for " + full.string(), "out");
}

void write_manifest(const fs::path& out, const std::string& command, const nlohmann::json& config,
                    const std::vector<fs::path>& files) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& rel : files) {
    std::ifstream f(out / rel, std::ios::binary);
    if (!f) fail(ErrorKind::data, "cannot read back " + (out / rel).string(), "out");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    list.push_back({{"path", rel.generic_string()}, {"fnv1a", fnv1a_hex(bytes)}, {"bytes", bytes.size()}});
  }
  nlohmann::json m{{"command", command},
                   {"config", config},
                   {"config_hash", fnv1a_hex(config.dump())},
                   {"files", list}};
  write_file(out, "manifest.json", m.dump(2) + "\n");
}

std::string loss_csv(const std::vector<double>& trace) {
  std::ostringstream out;
  out << "iteration,elbo\n";
  for (std::size_t k = 0; k < trace.size(); ++k) out << k + 1 << ',' << format_double(trace[k]) << '\n';
  return out.str();
}

namespace {

std::uint64_t variant_key(EncoderVariant v) { return static_cast<std::uint64_t>(v) + 1; }

std::vector<Index> subsample(const std::vector<Index>& rows, Index limit, std::uint64_t seed) {
  if (limit <= 0 || static_cast<Index>(rows.size()) <= limit) return rows;
  SplitOptions pick{seed, 1.0 - static_cast<double>(limit) / static_cast<double>(rows.size())};
  auto [keep, drop] = split_rows(static_cast<Index>(rows.size()), pick);
  std::vector<Index> out;
  for (Index k : keep) out.push_back(rows[static_cast<std::size_t>(k)]);
  return out;
}

Matrix gather(const Matrix& m, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = m.row(idx[k]);
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const fs::path& out, const ExperimentLog& log) {
  spec.validate();
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const VariableSchema description = load_schema(spec.schema);
  ExperimentResult result;
  std::vector<RankEntry> ranks;
  std::ostringstream auic_out;
  auic_out << "repetition,variant,strategy,row,auic\n";
  std::ostringstream rep_out;
  rep_out << "repetition,variant,strategy,mean_auic,stderr,rows\n";

  for (int rep = 0; rep < spec.repetitions; ++rep) {
    const std::uint64_t rep_seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(rep)});
    Dataset data;
    try {
      data = ingest_csv(spec.data, description, SplitOptions{rep_seed, spec.test_fraction});
    } catch (const Error& e) {
      fail(e.kind(), "repetition " + std::to_string(rep) + ": " + e.what(), e.field());
    }
    std::vector<Index> test_rows = data.test_index;
    if (spec.max_test_rows > 0 && static_cast<Index>(test_rows.size()) > spec.max_test_rows) {
      test_rows.resize(static_cast<std::size_t>(spec.max_test_rows));
    }
    const Matrix train_rows = data.train_rows();
    const fs::path rep_dir = "rep" + std::to_string(rep);

    for (EncoderVariant variant : spec.variants) {
      const std::uint64_t vk = variant_key(variant);
      ModelConfig cfg = tabular_config(variant);
      cfg.encoder.latent_dim = spec.latent_dim;
      Rng init(derive_seed(rep_seed, {vk, 1}));
      PartialVae model = make_model(data.schema, cfg, init);
      TrainConfig tc = spec.train;
      tc.seed = derive_seed(rep_seed, {vk, 2});
      say("rep " + std::to_string(rep) + " " + to_string(variant) + ": training " + std::to_string(tc.iterations) +
          " iterations on " + std::to_string(train_rows.rows()) + " rows");
      TrainResult trained;
      try {
        trained = train(std::move(model), train_rows, tc);
      } catch (const Error& e) {
        fail(e.kind(), "repetition " + std::to_string(rep) + ", " + to_string(variant) + ": " + e.what(), e.field());
      }
      const fs::path vdir = rep_dir / to_string(variant);
      write_file(out, vdir / "model.pvae", serialize(trained.model));
      write_file(out, vdir / "loss.csv", loss_csv(trained.elbo_trace));
      result.files.push_back(vdir / "model.pvae");
      result.files.push_back(vdir / "loss.csv");

      const PartialVae& m = trained.model;
      const std::vector<Index> targets = m.schema.targets();
      const std::vector<Candidate> candidates =
          spec.grouped ? group_candidates(m.schema) : variable_candidates(m.schema);

      for (StrategyKind kind : spec.strategies) {
        Strategy strategy;
        strategy.kind = kind;
        strategy.samples = spec.reward_samples;
        if (kind == StrategyKind::sing) {
          const auto rows = subsample(data.train_index, spec.sing_rows, derive_seed(rep_seed, {vk, 4}));
          say("rep " + std::to_string(rep) + " " + to_string(variant) + ": SING ordering over " +
              std::to_string(rows.size()) + " training rows");
          strategy.ordering = single_best_ordering(m, gather(data.values, rows), candidates, targets,
                                                   spec.sing_samples, derive_seed(rep_seed, {vk, 3}), spec.threads);
          std::ostringstream o;
          o << "position,candidate\n";
          for (std::size_t k = 0; k < strategy.ordering.size(); ++k) o << k << ',' << strategy.ordering[k] << '\n';
          write_file(out, vdir / "sing_order.csv", o.str());
          result.files.push_back(vdir / "sing_order.csv");
        }

        std::vector<EpisodeRecord> records(test_rows.size());
        EpisodeOptions opts;
        opts.grouped = spec.grouped;
        opts.budget = spec.budget;
        opts.likelihood_samples = spec.likelihood_samples;
        parallel_for(test_rows.size(), spec.threads, [&](std::size_t k) {
          const Index row = test_rows[k];
          EpisodeRecord rec;
          rec.repetition = rep;
          rec.variant = variant;
          rec.strategy = kind;
          rec.row = row;
          try {
            rec.curve = run_episode(m, data.values.row(row).transpose(), strategy, opts,
                                    derive_seed(rep_seed, {kEpisodeKey, static_cast<std::uint64_t>(row)}));
          } catch (const Error& e) {
            fail(e.kind(), "repetition " + std::to_string(rep) + ", row " + std::to_string(row) + ": " + e.what(),
                 e.field());
          }
          rec.auic = auic(rec.curve, spec.grouped);
          records[k] = std::move(rec);
        });

        std::ostringstream curves;
        curves << "row,step,candidate,cost,cumulative_cost,neg_log_likelihood\n";
        std::vector<double> values;
        const std::string method = method_name(variant, kind);
        for (const auto& rec : records) {
          for (std::size_t s = 0; s < rec.curve.steps.size(); ++s) {
            const auto& st = rec.curve.steps[s];
            curves << rec.row << ',' << s << ',' << st.candidate << ',' << format_double(st.cost) << ','
                   << format_double(st.cumulative_cost) << ',' << format_double(st.neg_log_likelihood) << '\n';
          }
          auic_out << rep << ',' << to_string(variant) << ',' << to_string(kind) << ',' << rec.row << ','
                   << format_double(rec.auic) << '\n';
          values.push_back(rec.auic);
          ranks.push_back(RankEntry{method, "rep" + std::to_string(rep), std::to_string(rec.row), rec.auic});
        }
        const MeanStderr ms = summarize(values);
        rep_out << rep << ',' << to_string(variant) << ',' << to_string(kind) << ',' << format_double(ms.mean) << ','
                << format_double(ms.std_error) << ',' << ms.count << '\n';
        result.repetition_means[method].push_back(ms.mean);
        say("rep " + std::to_string(rep) + " " + method + ": mean AUIC " + format_double(ms.mean));
        const fs::path cpath = vdir / to_string(kind) / "curves.csv";
        write_file(out, cpath, curves.str());
        result.files.push_back(cpath);
        for (auto& rec : records) result.episodes.push_back(std::move(rec));
      }
    }
  }

  std::ostringstream summary;
  summary << "variant,strategy,mean_auic,stderr,repetitions\n";
  for (EncoderVariant v : spec.variants) {
    for (StrategyKind k : spec.strategies) {
      const MeanStderr ms = summarize(result.repetition_means[method_name(v, k)]);
      summary << to_string(v) << ',' << to_string(k) << ',' << format_double(ms.mean) << ','
              << format_double(ms.std_error) << ',' << ms.count << '\n';
    }
  }
  result.ranking = average_ranking(ranks);
  std::ostringstream ranking;
  ranking << "method,average_rank\n";
  for (const auto& [mname, r] : result.ranking) ranking << mname << ',' << format_double(r) << '\n';

  write_file(out, "auic.csv", auic_out.str());
  write_file(out, "repetitions.csv", rep_out.str());
  write_file(out, "summary.csv", summary.str());
  write_file(out, "ranking.csv", ranking.str());
  write_file(out, "spec.json", to_json(spec).dump(2) + "\n");
  for (const char* f : {"auic.csv", "repetitions.csv", "summary.csv", "ranking.csv", "spec.json"}) result.files.emplace_back(f);
  write_manifest(out, "experiment", to_json(spec), result.files);
  return result;
}

}  // namespace eddi
