#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eddi/acquisition.hpp"
#include "eddi/dataset.hpp"
#include "eddi/metrics.hpp"

namespace eddi {

struct ExperimentSpec {
  std::filesystem::path data;
  std::filesystem::path schema;
  std::vector<EncoderVariant> variants{EncoderVariant::pnp};
  std::vector<StrategyKind> strategies{StrategyKind::eddi, StrategyKind::rand, StrategyKind::sing};
  int repetitions = 10;
  double test_fraction = 0.1;
  TrainConfig train;
  Index latent_dim = 10;
  Index reward_samples = kDefaultRewardSamples;
  Index likelihood_samples = kDefaultRewardSamples;
  Index sing_samples = kDefaultRewardSamples;
  Index sing_rows = 0;      // training rows averaged by SING; 0 = all
  Index max_test_rows = 0;  // 0 = every test row
  Index budget = -1;
  bool grouped = false;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

nlohmann::json to_json(const ExperimentSpec& s);
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);

// FNV-1a 64 over the canonical JSON form of the spec, as 16 hex digits.
std::string config_hash(const ExperimentSpec& spec);
std::string fnv1a_hex(const std::string& bytes);

struct EpisodeRecord {
  int repetition = 0;
  EncoderVariant variant = EncoderVariant::pnp;
  StrategyKind strategy = StrategyKind::eddi;
  Index row = 0;  // dataset row index
  InfoCurve curve;
  double auic = 0.0;
};

struct ExperimentResult {
  std::vector<EpisodeRecord> episodes;
  // "variant/strategy" -> per-repetition mean AUIC over test rows
  std::map<std::string, std::vector<double>> repetition_means;
  std::map<std::string, double> ranking;
  std::vector<std::filesystem::path> files;  // relative to the output directory
};

std::string method_name(EncoderVariant v, StrategyKind s);

using ExperimentLog = std::function<void(const std::string&)>;

// Seeds: repetition r uses derive_seed(seed, {r}) for its split; the model of
// variant v is initialized from derive_seed(rep, {v, 1}) and trained with
// derive_seed(rep, {v, 2}); SING uses derive_seed(rep, {v, 3}); the episode
// of dataset row i uses derive_seed(rep, {kEpisodeKey, i}) for every method.
inline constexpr std::uint64_t kEpisodeKey = 0x455049ULL;

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out,
                                const ExperimentLog& log = {});

// Writes `bytes` to out/relative, creating directories.
void write_file(const std::filesystem::path& out, const std::filesystem::path& relative, const std::string& bytes);

// manifest.json listing every file with its FNV-1a hash, plus the config hash.
void write_manifest(const std::filesystem::path& out, const std::string& command, const nlohmann::json& config,
                    const std::vector<std::filesystem::path>& files);

std::string loss_csv(const std::vector<double>& trace);

}  // namespace eddi
