#include "eddi/oracle_check.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace eddi {

oracle::TabularModel oracle_check_model(const OracleCheckOptions& options, int k) {
  Rng rng(derive_seed(options.seed, {static_cast<std::uint64_t>(k)}));
  const Index d = 2 + static_cast<Index>(rng.index(static_cast<std::size_t>(std::max<Index>(options.max_variables - 1, 1))));
  return oracle::random_model(d, options.max_cardinality, options.latent_cardinality, rng);
}

void for_each_triple(const oracle::TabularModel& m,
                     const std::function<void(const oracle::Assignment&, Index, const std::vector<Index>&)>& fn) {
  const Index d = m.num_variables();
  for (Index i = 0; i < d; ++i) {
    std::vector<Index> others;
    for (Index j = 0; j < d; ++j)
      if (j != i) others.push_back(j);
    const auto n = static_cast<unsigned>(others.size());
    for (unsigned phi_mask = 1; phi_mask < (1u << n); ++phi_mask) {
      std::vector<Index> phi;
      std::vector<Index> rest;
      for (unsigned b = 0; b < n; ++b) (phi_mask >> b & 1u ? phi : rest).push_back(others[b]);
      const auto r = static_cast<unsigned>(rest.size());
      for (unsigned obs_mask = 0; obs_mask < (1u << r); ++obs_mask) {
        std::vector<Index> observed;
        for (unsigned b = 0; b < r; ++b)
          if (obs_mask >> b & 1u) observed.push_back(rest[b]);
        for (const auto& obs : oracle::enumerate(m, observed)) fn(obs, i, phi);
      }
    }
  }
}

OracleCheckReport oracle_check(const OracleCheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  OracleCheckReport report;
  report.min_reward = INFINITY;
  report.min_mutual_information = INFINITY;
  for (int k = 0; k < options.models; ++k) {
    const oracle::TabularModel m = oracle_check_model(options, k);
    for_each_triple(m, [&](const oracle::Assignment& obs, Index i, const std::vector<Index>& phi) {
      const double direct = oracle::reward_direct(m, obs, i, phi);
      const double latent = oracle::reward_latent(m, obs, i, phi);
      const oracle::BaldTerms bald = oracle::bald_decomposition(m, obs, i, phi);
      report.max_identity_gap = std::max(report.max_identity_gap, std::abs(direct - latent));
      report.max_bald_gap = std::max(report.max_bald_gap, std::abs(bald.term_a - bald.term_b - direct));
      report.min_reward = std::min(report.min_reward, direct);
      report.min_mutual_information = std::min({report.min_mutual_information, bald.term_a, bald.term_b});
      ++report.triples;
    });
    ++report.models;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace eddi
