#include <cmath>

#include <gtest/gtest.h>

#include "eddi/error.hpp"
#include "eddi/oracle_check.hpp"
#include "eddi/tabular_oracle.hpp"

using namespace eddi;
using namespace eddi::oracle;

namespace {

Matrix table(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (auto row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// p(x_A = a, x_O = o) by summing products over z, no logs.
double joint(const TabularModel& m, const Assignment& a) {
  double total = 0.0;
  for (Index z = 0; z < m.latent_cardinality(); ++z) {
    double p = m.prior[static_cast<std::size_t>(z)];
    for (const auto& [d, v] : a) p *= m.conditionals[static_cast<std::size_t>(d)](z, v);
    total += p;
  }
  return total;
}

Assignment merge(Assignment a, const Assignment& b) {
  a.insert(b.begin(), b.end());
  return a;
}

// H(x_phi | x_O = obs) from the joint table.
double conditional_entropy(const TabularModel& m, const Assignment& obs, const std::vector<Index>& phi) {
  const double po = joint(m, obs);
  double h = 0.0;
  for (const auto& xp : enumerate(m, phi)) {
    const double p = joint(m, merge(xp, obs)) / po;
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

double information_gain(const TabularModel& m, const Assignment& obs, Index i, const std::vector<Index>& phi) {
  const double po = joint(m, obs);
  double expected = 0.0;
  for (Index v = 0; v < m.cardinality(i); ++v) {
    const Assignment with = merge({{i, v}}, obs);
    const double p = joint(m, with) / po;
    if (p > 0) expected += p * conditional_entropy(m, with, phi);
  }
  return conditional_entropy(m, obs, phi) - expected;
}

TabularModel copy_model() {
  // z uniform binary; x0 = z, x1 = z (copies), x2 independent noise.
  TabularModel m;
  m.prior = {0.5, 0.5};
  m.conditionals = {table({{1, 0}, {0, 1}}), table({{1, 0}, {0, 1}}), table({{0.3, 0.7}, {0.3, 0.7}})};
  m.validate();
  return m;
}

}  // namespace

TEST(ExactPosterior, EmptyIsPrior) {
  Rng rng(1);
  const TabularModel m = random_model(3, 3, 4, rng);
  const auto post = exact_posterior(m, {});
  for (std::size_t z = 0; z < post.size(); ++z) EXPECT_NEAR(post[z], m.prior[z], 1e-15);
}

TEST(ExactPosterior, DeterministicChannelCollapses) {
  TabularModel m;
  m.prior = {0.2, 0.3, 0.5};
  m.conditionals = {table({{1, 0}, {0, 1}, {1, 0}})};
  const auto post = exact_posterior(m, {{0, 1}});
  EXPECT_NEAR(post[1], 1.0, 1e-15);
  EXPECT_EQ(post[0], 0.0);
  const auto post0 = exact_posterior(m, {{0, 0}});
  EXPECT_NEAR(post0[0], 0.2 / 0.7, 1e-15);
  EXPECT_NEAR(post0[2], 0.5 / 0.7, 1e-15);
}

TEST(ExactPosterior, MatchesJointEnumeration) {
  Rng rng(2);
  const TabularModel m = random_model(3, 4, 3, rng);
  const std::vector<Index> vars{0, 2};
  for (const auto& obs : enumerate(m, vars)) {
    const auto post = exact_posterior(m, obs);
    double total = 0;
    for (Index z = 0; z < 3; ++z) {
      double p = m.prior[static_cast<std::size_t>(z)];
      for (const auto& [d, v] : obs) p *= m.conditionals[static_cast<std::size_t>(d)](z, v);
      EXPECT_NEAR(post[static_cast<std::size_t>(z)], p / joint(m, obs), 1e-12);
      total += post[static_cast<std::size_t>(z)];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(ExactPosterior, ZeroEvidence) {
  TabularModel m;
  m.prior = {1.0, 0.0};
  m.conditionals = {table({{1, 0}, {0, 1}})};
  try {
    exact_posterior(m, {{0, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::evidence);
  }
}

TEST(RewardDirect, IndependentVariableIsZero) {
  const TabularModel m = copy_model();
  const std::vector<Index> phi{0};
  EXPECT_NEAR(reward_direct(m, {}, 2, phi), 0.0, 1e-15);
}

TEST(RewardDirect, CopyEqualsEntropyDifference) {
  const TabularModel m = copy_model();
  const std::vector<Index> phi{0};
  EXPECT_NEAR(reward_direct(m, {}, 1, phi), information_gain(m, {}, 1, phi), 1e-12);
  EXPECT_NEAR(reward_direct(m, {}, 1, phi), std::log(2.0), 1e-12);
}

TEST(RewardDirect, InformationGainIdentityOnRandomModels) {
  for (int k = 0; k < 20; ++k) {
    Rng rng(static_cast<std::uint64_t>(100 + k));
    const TabularModel m = random_model(4, 3, 3, rng);
    for (const auto& obs : enumerate(m, std::vector<Index>{3})) {
      const std::vector<Index> phi{0, 2};
      const double r = reward_direct(m, obs, 1, phi);
      EXPECT_NEAR(r, information_gain(m, obs, 1, phi), 1e-10);
      EXPECT_GE(r, -1e-15);
    }
  }
}

TEST(RewardDirect, RelabelingOutcomesInvariant) {
  Rng rng(4);
  const TabularModel m = random_model(3, 4, 3, rng);
  TabularModel relabeled = m;
  Matrix& t = relabeled.conditionals[1];
  t.col(0).swap(t.col(t.cols() - 1));
  const std::vector<Index> phi{2};
  EXPECT_NEAR(reward_direct(m, {}, 1, phi), reward_direct(relabeled, {}, 1, phi), 1e-14);
}

TEST(RewardLatent, CentralIdentityOnHundredModels) {
  OracleCheckOptions o;
  o.models = 100;
  o.seed = 3;
  const OracleCheckReport r = oracle_check(o);
  EXPECT_EQ(r.models, 100);
  EXPECT_GT(r.triples, 0);
  EXPECT_LT(r.max_identity_gap, 1e-10);
  EXPECT_LT(r.max_bald_gap, 1e-10);
  EXPECT_GE(r.min_reward, -1e-12);
  EXPECT_GE(r.min_mutual_information, -1e-12);
}

TEST(RewardLatent, IndependentOfLatentGivesZero) {
  const TabularModel m = copy_model();
  const std::vector<Index> phi{0};
  EXPECT_NEAR(reward_latent(m, {}, 2, phi), 0.0, 1e-15);
}

TEST(RewardLatent, DeterministicPosteriorGivesZero) {
  const TabularModel m = copy_model();
  // Observing x0 pins z.
  const std::vector<Index> phi{1};
  EXPECT_NEAR(reward_latent(m, {{0, 1}}, 2, phi), 0.0, 1e-15);
  EXPECT_NEAR(reward_direct(m, {{0, 1}}, 2, phi), 0.0, 1e-15);
}

TEST(Bald, IndependentTargetGivesZeroTerms) {
  const TabularModel m = copy_model();
  const std::vector<Index> phi{2};
  const BaldTerms t = bald_decomposition(m, {}, 0, phi);
  EXPECT_NEAR(t.term_a, 0.0, 1e-15);
  EXPECT_NEAR(t.term_b, 0.0, 1e-15);
}

TEST(Bald, IdentityAndNonNegativity) {
  for (int k = 0; k < 20; ++k) {
    Rng rng(static_cast<std::uint64_t>(k));
    const TabularModel m = random_model(4, 4, 4, rng);
    const std::vector<Index> phi{3};
    const BaldTerms t = bald_decomposition(m, {{0, 1}}, 2, phi);
    EXPECT_NEAR(t.term_a - t.term_b, reward_direct(m, {{0, 1}}, 2, phi), 1e-10);
    EXPECT_GE(t.term_a, -1e-12);
    EXPECT_GE(t.term_b, -1e-12);
  }
}

TEST(TabularModel, ValidationAndCaps) {
  Rng rng(0);
  EXPECT_THROW(random_model(9, 2, 2, rng), Error);
  TabularModel m;
  m.prior = {0.5, 0.6};
  m.conditionals = {table({{1, 0}, {0, 1}})};
  try {
    m.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  m.prior = std::vector<double>(9, 1.0 / 9);
  try {
    m.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability);
  }
}

TEST(TabularModel, QueryErrors) {
  const TabularModel m = copy_model();
  const std::vector<Index> phi{0};
  EXPECT_THROW(reward_direct(m, {{1, 0}}, 1, phi), Error);
  EXPECT_THROW(reward_direct(m, {}, 0, phi), Error);
  EXPECT_THROW(reward_direct(m, {}, 1, std::vector<Index>{}), Error);
}

TEST(TabularModel, JsonRoundTrip) {
  Rng rng(6);
  const TabularModel m = random_model(3, 3, 2, rng);
  const TabularModel back = model_from_json(to_json(m));
  EXPECT_EQ(back.prior, m.prior);
  for (std::size_t d = 0; d < m.conditionals.size(); ++d) EXPECT_EQ(back.conditionals[d], m.conditionals[d]);
}

TEST(OracleCheck, EnumeratesEveryTriple) {
  // D = 2, binary: i in {0,1}, phi = the other, obs = empty -> 2 triples.
  TabularModel m;
  m.prior = {0.4, 0.6};
  m.conditionals = {table({{0.1, 0.9}, {0.8, 0.2}}), table({{0.5, 0.5}, {0.3, 0.7}})};
  long count = 0;
  for_each_triple(m, [&](const Assignment& obs, Index, const std::vector<Index>& phi) {
    EXPECT_TRUE(obs.empty());
    EXPECT_EQ(phi.size(), 1u);
    ++count;
  });
  EXPECT_EQ(count, 2);
}
