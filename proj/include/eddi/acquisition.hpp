#pragma once

// Sequential variable acquisition driven by the latent-space information
// reward
//
//   R(i, x_O) ~= E[ KL(q(z|x_i,x_O) || q(z|x_O)) ]
//              - E[ KL(q(z|x_phi,x_i,x_O) || q(z|x_phi,x_O)) ]
//
// with (x_i, x_phi) drawn jointly from the model's conditional, one shared
// sample set for both terms.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eddi/partial_vae.hpp"
#include "eddi/rng.hpp"

namespace eddi {

// A selectable unit: one variable, or a group revealed together.
struct Candidate {
  int id = 0;                   // variable index or group id
  std::vector<Index> variables;  // ascending
};

// One candidate per non-target variable.
std::vector<Candidate> variable_candidates(const VariableSchema& schema);
// One candidate per group, restricted to its non-target members.
std::vector<Candidate> group_candidates(const VariableSchema& schema);

struct RewardEstimate {
  int candidate = 0;
  double value = 0.0;
  double std_error = 0.0;
  Index samples = 0;
  std::vector<double> terms;  // per-sample bracketed terms
};

inline constexpr Index kDefaultRewardSamples = 50;
inline constexpr Index kDefaultGroupRewardSamples = 10;

// Reward of revealing all of `candidate`'s currently unobserved variables.
RewardEstimate candidate_reward(const PartialVae& model, const ObservationSet& obs, const Candidate& candidate,
                                std::span<const Index> targets, Index n, Rng& rng);

RewardEstimate information_reward(const PartialVae& model, const ObservationSet& obs, Index variable,
                                  std::span<const Index> targets, Index n, Rng& rng);

RewardEstimate grouped_reward(const PartialVae& model, const ObservationSet& obs, int group,
                              std::span<const Index> targets, Index n, Rng& rng);

// Rewards for every candidate. Candidate c draws from base.substream({c.id}),
// so the result does not depend on `threads`.
std::vector<RewardEstimate> evaluate_rewards(const PartialVae& model, const ObservationSet& obs,
                                             std::span<const Candidate> candidates, std::span<const Index> targets,
                                             Index n, const Rng& base, int threads = 1);

enum class StrategyKind { eddi, rand, sing };

const char* to_string(StrategyKind k);
StrategyKind strategy_from_string(const std::string& s);

struct Strategy {
  StrategyKind kind = StrategyKind::eddi;
  Index samples = kDefaultRewardSamples;
  std::vector<int> ordering;  // SING only: candidate ids, best first
  int threads = 1;
};

using RewardFn = std::function<RewardEstimate(const Candidate&, Rng&)>;

struct Selection {
  int candidate = 0;
  std::vector<RewardEstimate> rewards;  // EDDI only, in candidate order
};

// Index of the largest value; ties go to the earliest entry.
std::size_t argmax_first(std::span<const RewardEstimate> rewards);

Selection select_next(const PartialVae& model, const ObservationSet& obs, std::span<const Candidate> selectable,
                      std::span<const Index> targets, const Strategy& strategy, Rng& rng);

// Same, with rewards supplied by `reward` (used for EDDI only).
Selection select_next(std::span<const Candidate> selectable, const Strategy& strategy, Rng& rng,
                      const RewardFn& reward);

// Greedy global ordering maximizing the reward averaged over `rows`
// (NaN = natively missing). Step t uses Rng(derive_seed(seed, {t})).
std::vector<int> single_best_ordering(const PartialVae& model, const Matrix& rows,
                                      std::span<const Candidate> candidates, std::span<const Index> targets, Index n,
                                      std::uint64_t seed, int threads = 1);

struct TargetPrediction {
  Index variable = 0;
  double mean = 0.0;
  double variance = 0.0;
};

std::vector<TargetPrediction> predict_targets(const PartialVae& model, const ObservationSet& obs,
                                              std::span<const Index> targets, Index n, Rng& rng);

struct CurveStep {
  int candidate = -1;  // -1 for the initial empty-observation entry
  double cost = 0.0;
  double cumulative_cost = 0.0;
  double neg_log_likelihood = 0.0;
  std::vector<RewardEstimate> rewards;  // EDDI: the table the choice was made from
  std::vector<TargetPrediction> prediction;
};

struct InfoCurve {
  std::vector<CurveStep> steps;
  std::vector<int> unavailable;  // chosen candidates absent from the test row
};

struct EpisodeOptions {
  bool grouped = false;
  Index budget = -1;  // acquisitions; negative = until exhausted
  Index likelihood_samples = kDefaultRewardSamples;
};

// Random-stream keys inside an episode seeded with `seed`:
//   selection at step t (t >= 1):   derive_seed(seed, {t})
//   likelihood at step t (t >= 0):  derive_seed(seed, {t, kLikelihoodKey})
//   prediction at step t:           derive_seed(seed, {t, kPredictionKey})
inline constexpr std::uint64_t kLikelihoodKey = 0x4e4c4cULL;
inline constexpr std::uint64_t kPredictionKey = 0x505245ULL;

InfoCurve run_episode(const PartialVae& model, const Vector& row, const Strategy& strategy,
                      const EpisodeOptions& options, std::uint64_t seed);

// step,candidate,cost,cumulative_cost,neg_log_likelihood
std::string curve_csv(const InfoCurve& curve);

}  // namespace eddi
