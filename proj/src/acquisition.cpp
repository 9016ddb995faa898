#include "eddi/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eddi/error.hpp"
#include "eddi/format.hpp"
#include "eddi/parallel.hpp"

namespace eddi {

std::vector<Candidate> variable_candidates(const VariableSchema& schema) {
  std::vector<Candidate> out;
  for (Index i : schema.selectable()) out.push_back(Candidate{static_cast<int>(i), {i}});
  return out;
}

std::vector<Candidate> group_candidates(const VariableSchema& schema) {
  std::vector<Candidate> out;
  for (const auto& [gid, members] : schema.groups()) {
    Candidate c{gid, {}};
    for (Index i : members)
      if (!schema.variables[static_cast<std::size_t>(i)].target) c.variables.push_back(i);
    if (!c.variables.empty()) out.push_back(std::move(c));
  }
  return out;
}

RewardEstimate candidate_reward(const PartialVae& model, const ObservationSet& obs, const Candidate& candidate,
                                std::span<const Index> targets, Index n, Rng& rng) {
  if (n < 1) fail(ErrorKind::argument, "reward estimation needs at least one sample", "samples");
  for (Index t : targets) {
    if (obs.contains(t)) fail(ErrorKind::argument, "target " + std::to_string(t) + " is already observed");
  }
  std::vector<Index> reveal;
  for (Index v : candidate.variables) {
    if (std::find(targets.begin(), targets.end(), v) != targets.end()) {
      fail(ErrorKind::argument, "candidate variable " + std::to_string(v) + " is a target");
    }
    if (!obs.contains(v)) reveal.push_back(v);
  }
  if (reveal.empty()) {
    fail(ErrorKind::argument, "candidate " + std::to_string(candidate.id) + " has no unobserved variable");
  }

  std::vector<Index> query = reveal;
  query.insert(query.end(), targets.begin(), targets.end());
  const Matrix draws = sample_conditional(model, obs, query, n, rng);
  const std::size_t nr = reveal.size();

  // [x_O, (x_i, x_O)_s..., (x_phi, x_i, x_O)_s..., (x_phi, x_O)_s...]
  std::vector<ObservationSet> sets;
  sets.reserve(static_cast<std::size_t>(3 * n + 1));
  sets.push_back(obs);
  for (Index s = 0; s < n; ++s) {
    ObservationSet a = obs;
    for (std::size_t k = 0; k < nr; ++k) a.insert(reveal[k], draws(s, static_cast<Index>(k)));
    sets.push_back(std::move(a));
  }
  for (Index s = 0; s < n; ++s) {
    ObservationSet b = sets[static_cast<std::size_t>(1 + s)];
    for (std::size_t k = 0; k < targets.size(); ++k) b.insert(targets[k], draws(s, static_cast<Index>(nr + k)));
    sets.push_back(std::move(b));
  }
  for (Index s = 0; s < n; ++s) {
    ObservationSet c = obs;
    for (std::size_t k = 0; k < targets.size(); ++k) c.insert(targets[k], draws(s, static_cast<Index>(nr + k)));
    sets.push_back(std::move(c));
  }
  const GaussianBatch q = encode_batch(model.config.encoder, model.encoder, sets);
  const DiagonalGaussian q_obs = q.row(0);

  RewardEstimate r;
  r.candidate = candidate.id;
  r.samples = n;
  r.terms.resize(static_cast<std::size_t>(n));
  double sum = 0.0;
  for (Index s = 0; s < n; ++s) {
    const double gain = gaussian_kl(q.row(1 + s), q_obs);
    const double overlap = gaussian_kl(q.row(1 + n + s), q.row(1 + 2 * n + s));
    r.terms[static_cast<std::size_t>(s)] = gain - overlap;
    sum += gain - overlap;
  }
  r.value = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double t : r.terms) ss += (t - r.value) * (t - r.value);
    r.std_error = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  }
  return r;
}

RewardEstimate information_reward(const PartialVae& model, const ObservationSet& obs, Index variable,
                                  std::span<const Index> targets, Index n, Rng& rng) {
  if (obs.contains(variable)) fail(ErrorKind::argument, "variable " + std::to_string(variable) + " is already observed");
  return candidate_reward(model, obs, Candidate{static_cast<int>(variable), {variable}}, targets, n, rng);
}

RewardEstimate grouped_reward(const PartialVae& model, const ObservationSet& obs, int group,
                              std::span<const Index> targets, Index n, Rng& rng) {
  for (const auto& c : group_candidates(model.schema)) {
    if (c.id != group) continue;
    const bool open = std::any_of(c.variables.begin(), c.variables.end(), [&](Index v) { return !obs.contains(v); });
    if (!open) fail(ErrorKind::argument, "group " + std::to_string(group) + " is fully observed");
    return candidate_reward(model, obs, c, targets, n, rng);
  }
  fail(ErrorKind::argument, "unknown or target-only group " + std::to_string(group));
}

std::vector<RewardEstimate> evaluate_rewards(const PartialVae& model, const ObservationSet& obs,
                                             std::span<const Candidate> candidates, std::span<const Index> targets,
                                             Index n, const Rng& base, int threads) {
  std::vector<RewardEstimate> out(candidates.size());
  parallel_for(candidates.size(), threads, [&](std::size_t k) {
    Rng rng = base.substream({static_cast<std::uint64_t>(candidates[k].id)});
    out[k] = candidate_reward(model, obs, candidates[k], targets, n, rng);
  });
  return out;
}

const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::eddi: return "eddi";
    case StrategyKind::rand: return "rand";
    case StrategyKind::sing: return "sing";
  }
  return "?";
}

StrategyKind strategy_from_string(const std::string& s) {
  if (s == "eddi") return StrategyKind::eddi;
  if (s == "rand") return StrategyKind::rand;
  if (s == "sing") return StrategyKind::sing;
  fail(ErrorKind::config, "unknown strategy '" + s + "'", "strategy");
}

std::size_t argmax_first(std::span<const RewardEstimate> rewards) {
  if (rewards.empty()) fail(ErrorKind::argument, "argmax over an empty reward table");
  std::size_t best = 0;
  for (std::size_t k = 1; k < rewards.size(); ++k)
    if (rewards[k].value > rewards[best].value) best = k;
  return best;
}

Selection select_next(std::span<const Candidate> selectable, const Strategy& strategy, Rng& rng,
                      const RewardFn& reward) {
  if (selectable.empty()) fail(ErrorKind::argument, "no selectable candidates");
  Selection s;
  switch (strategy.kind) {
    case StrategyKind::eddi: {
      // Lowest candidate id wins ties, whatever order the caller passed.
      std::vector<Candidate> sorted(selectable.begin(), selectable.end());
      std::stable_sort(sorted.begin(), sorted.end(), [](const Candidate& a, const Candidate& b) { return a.id < b.id; });
      for (const auto& c : sorted) {
        Rng sub = rng.substream({static_cast<std::uint64_t>(c.id)});
        s.rewards.push_back(reward(c, sub));
      }
      s.candidate = sorted[argmax_first(s.rewards)].id;
      break;
    }
    case StrategyKind::rand:
      s.candidate = selectable[rng.index(selectable.size())].id;
      break;
    case StrategyKind::sing: {
      for (int id : strategy.ordering) {
        auto it = std::find_if(selectable.begin(), selectable.end(), [id](const Candidate& c) { return c.id == id; });
        if (it != selectable.end()) {
          s.candidate = id;
          return s;
        }
      }
      fail(ErrorKind::config, "SING ordering covers none of the selectable candidates", "ordering");
    }
  }
  return s;
}

Selection select_next(const PartialVae& model, const ObservationSet& obs, std::span<const Candidate> selectable,
                      std::span<const Index> targets, const Strategy& strategy, Rng& rng) {
  if (selectable.empty()) fail(ErrorKind::argument, "no selectable candidates");
  if (strategy.kind != StrategyKind::eddi) {
    return select_next(selectable, strategy, rng, RewardFn{});
  }
  std::vector<Candidate> sorted(selectable.begin(), selectable.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const Candidate& a, const Candidate& b) { return a.id < b.id; });
  Selection s;
  s.rewards = evaluate_rewards(model, obs, sorted, targets, strategy.samples, rng, strategy.threads);
  s.candidate = sorted[argmax_first(s.rewards)].id;
  return s;
}

std::vector<int> single_best_ordering(const PartialVae& model, const Matrix& rows,
                                      std::span<const Candidate> candidates, std::span<const Index> targets, Index n,
                                      std::uint64_t seed, int threads) {
  if (rows.rows() == 0) fail(ErrorKind::argument, "SING ordering needs at least one row");
  std::vector<Candidate> remaining(candidates.begin(), candidates.end());
  std::stable_sort(remaining.begin(), remaining.end(), [](const Candidate& a, const Candidate& b) { return a.id < b.id; });
  std::vector<ObservationSet> state(static_cast<std::size_t>(rows.rows()), ObservationSet(rows.cols()));
  std::vector<int> ordering;
  for (std::uint64_t t = 1; !remaining.empty(); ++t) {
    const Rng base(derive_seed(seed, {t}));
    std::vector<RewardEstimate> avg(remaining.size());
    parallel_for(remaining.size(), threads, [&](std::size_t k) {
      const Rng stream = base.substream({static_cast<std::uint64_t>(remaining[k].id)});
      double sum = 0.0;
      for (const auto& obs : state) {
        Rng rng = stream;  // common random numbers across rows
        sum += candidate_reward(model, obs, remaining[k], targets, n, rng).value;
      }
      avg[k].candidate = remaining[k].id;
      avg[k].value = sum / static_cast<double>(state.size());
      avg[k].samples = n;
    });
    const std::size_t best = argmax_first(avg);
    ordering.push_back(remaining[best].id);
    for (Index r = 0; r < rows.rows(); ++r) {
      for (Index v : remaining[best].variables) {
        if (!std::isnan(rows(r, v)) && !state[static_cast<std::size_t>(r)].contains(v)) {
          state[static_cast<std::size_t>(r)].insert(v, rows(r, v));
        }
      }
    }
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return ordering;
}

std::vector<TargetPrediction> predict_targets(const PartialVae& model, const ObservationSet& obs,
                                              std::span<const Index> targets, Index n, Rng& rng) {
  const Imputation imp = impute(model, obs, rng, n);
  std::vector<TargetPrediction> out;
  for (Index t : targets) {
    auto it = std::find(imp.variables.begin(), imp.variables.end(), t);
    if (it == imp.variables.end()) continue;
    const auto k = static_cast<Index>(it - imp.variables.begin());
    out.push_back(TargetPrediction{t, imp.mean[k], imp.variance[k]});
  }
  return out;
}

InfoCurve run_episode(const PartialVae& model, const Vector& row, const Strategy& strategy,
                      const EpisodeOptions& options, std::uint64_t seed) {
  if (row.size() != model.num_variables()) fail(ErrorKind::shape, "test row width does not match the model");
  const std::vector<Index> targets = model.schema.targets();
  std::vector<std::pair<Index, double>> target_values;
  for (Index t : targets) {
    if (std::isnan(row[t])) {
      fail(ErrorKind::data, "test row lacks a value for target '" + model.schema.variables[static_cast<std::size_t>(t)].name + "'",
           model.schema.variables[static_cast<std::size_t>(t)].name);
    }
    target_values.emplace_back(t, row[t]);
  }
  std::vector<Candidate> remaining =
      options.grouped ? group_candidates(model.schema) : variable_candidates(model.schema);

  ObservationSet obs(model.num_variables());
  InfoCurve curve;
  auto record = [&](int candidate, double cost, std::uint64_t t, std::vector<RewardEstimate> rewards) {
    Rng lik(derive_seed(seed, {t, kLikelihoodKey}));
    Rng pred(derive_seed(seed, {t, kPredictionKey}));
    CurveStep s;
    s.candidate = candidate;
    s.cost = cost;
    s.cumulative_cost = (curve.steps.empty() ? 0.0 : curve.steps.back().cumulative_cost) + cost;
    s.neg_log_likelihood = -predictive_log_likelihood(model, obs, target_values, options.likelihood_samples, lik);
    s.prediction = predict_targets(model, obs, targets, options.likelihood_samples, pred);
    s.rewards = std::move(rewards);
    curve.steps.push_back(std::move(s));
  };
  record(-1, 0.0, 0, {});

  Index acquired = 0;
  std::uint64_t t = 1;
  while (!remaining.empty() && (options.budget < 0 || acquired < options.budget)) {
    Rng sel(derive_seed(seed, {t}));
    Selection choice = select_next(model, obs, remaining, targets, strategy, sel);
    auto it = std::find_if(remaining.begin(), remaining.end(), [&](const Candidate& c) { return c.id == choice.candidate; });
    const Candidate cand = *it;
    remaining.erase(it);
    std::size_t revealed = 0;
    for (Index v : cand.variables) {
      if (obs.contains(v) || std::isnan(row[v])) continue;
      obs.insert(v, row[v]);
      ++revealed;
    }
    if (revealed == 0) {
      curve.unavailable.push_back(cand.id);
      continue;
    }
    record(cand.id, static_cast<double>(revealed), t, std::move(choice.rewards));
    ++acquired;
    ++t;
  }
  return curve;
}

std::string curve_csv(const InfoCurve& curve) {
  std::ostringstream out;
  out << "step,candidate,cost,cumulative_cost,neg_log_likelihood\n";
  for (std::size_t k = 0; k < curve.steps.size(); ++k) {
    const auto& s = curve.steps[k];
    out << k << ',' << s.candidate << ',' << format_double(s.cost) << ',' << format_double(s.cumulative_cost) << ','
        << format_double(s.neg_log_likelihood) << '\n';
  }
  return out.str();
}

}  // namespace eddi
