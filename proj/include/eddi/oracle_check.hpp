#pragma once

#include <cstdint>
#include <functional>

#include "eddi/tabular_oracle.hpp"

namespace eddi {

struct OracleCheckOptions {
  int models = 100;
  Index max_variables = 5;     // D drawn from 2..max_variables
  Index max_cardinality = 4;
  Index latent_cardinality = 4;
  std::uint64_t seed = 0;
};

struct OracleCheckReport {
  int models = 0;
  long triples = 0;
  double max_identity_gap = 0.0;  // |direct - latent|
  double max_bald_gap = 0.0;      // |(term_a - term_b) - direct|
  double min_reward = 0.0;
  double min_mutual_information = 0.0;
  double seconds = 0.0;
};

// Model k is random_model drawn from Rng(derive_seed(seed, {k})).
oracle::TabularModel oracle_check_model(const OracleCheckOptions& options, int k);

// Visits every (x_O, i, phi): i any variable, phi any non-empty subset of
// the others, O any subset of the rest with every joint value assignment.
void for_each_triple(const oracle::TabularModel& m,
                     const std::function<void(const oracle::Assignment&, Index, const std::vector<Index>&)>& fn);

OracleCheckReport oracle_check(const OracleCheckOptions& options);

}  // namespace eddi
