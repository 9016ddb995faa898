#pragma once

// Exact inference on small discrete latent-variable models
//   p(z, x) = p(z) * prod_d p(x_d | z)
// by enumeration. Ground truth for the acquisition identities.

#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eddi/autodiff.hpp"
#include "eddi/rng.hpp"

namespace eddi::oracle {

inline constexpr Index kMaxCardinality = 8;
inline constexpr Index kMaxVariables = 8;

struct TabularModel {
  std::vector<double> prior;               // p(z)
  std::vector<Matrix> conditionals;        // per variable: Z x cardinality, row z = p(x_d | z)
  std::vector<std::string> names;          // optional

  Index num_variables() const { return static_cast<Index>(conditionals.size()); }
  Index latent_cardinality() const { return static_cast<Index>(prior.size()); }
  Index cardinality(Index d) const { return conditionals[static_cast<std::size_t>(d)].cols(); }
  // Normalization within 1e-12, size caps (capability error beyond them).
  void validate() const;
};

// Variable index -> observed value.
using Assignment = std::map<Index, Index>;

// Dirichlet(1)-distributed tables.
TabularModel random_model(Index num_variables, Index max_cardinality, Index latent_cardinality, Rng& rng);

TabularModel model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TabularModel& m);

// p(z | x_O); evidence error when p(x_O) = 0.
std::vector<double> exact_posterior(const TabularModel& m, const Assignment& obs);

// p(x_A = a | x_O) for a joint assignment of unobserved variables.
double conditional_probability(const TabularModel& m, const Assignment& values, const Assignment& obs);

// E_{x_i | x_O} KL[p(x_phi | x_i, x_O) || p(x_phi | x_O)], in nats.
double reward_direct(const TabularModel& m, const Assignment& obs, Index i, std::span<const Index> phi);

// E_{x_i} KL[p(z|x_i,x_O) || p(z|x_O)] - E_{x_phi,x_i} KL[p(z|x_phi,x_i,x_O) || p(z|x_phi,x_O)].
double reward_latent(const TabularModel& m, const Assignment& obs, Index i, std::span<const Index> phi);

struct BaldTerms {
  double term_a = 0.0;  // I(z; x_phi | x_O)
  double term_b = 0.0;  // E_{x_i}[ I(z; x_phi | x_i, x_O) ]
};

// Mutual-information form computed from entropies; term_a - term_b equals
// the reward.
BaldTerms bald_decomposition(const TabularModel& m, const Assignment& obs, Index i, std::span<const Index> phi);

// All joint assignments of `vars` (mixed radix, first variable slowest).
std::vector<Assignment> enumerate(const TabularModel& m, std::span<const Index> vars);

}  // namespace eddi::oracle
