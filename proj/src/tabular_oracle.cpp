#include "eddi/tabular_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "eddi/error.hpp"

namespace eddi::oracle {

namespace {

constexpr double kNormTol = 1e-12;

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

// log p(z, x_O) for every z.
std::vector<double> log_joint(const TabularModel& m, const Assignment& obs) {
  std::vector<double> lj(m.prior.size());
  for (std::size_t z = 0; z < m.prior.size(); ++z) {
    double s = safe_log(m.prior[z]);
    for (const auto& [d, v] : obs) s += safe_log(m.conditionals[static_cast<std::size_t>(d)](static_cast<Index>(z), v));
    lj[z] = s;
  }
  return lj;
}

void check_assignment(const TabularModel& m, const Assignment& a) {
  for (const auto& [d, v] : a) {
    if (d < 0 || d >= m.num_variables()) fail(ErrorKind::shape, "variable " + std::to_string(d) + " out of range");
    if (v < 0 || v >= m.cardinality(d)) {
      fail(ErrorKind::shape, "value " + std::to_string(v) + " outside cardinality of variable " + std::to_string(d));
    }
  }
}

void check_query(const TabularModel& m, const Assignment& obs, Index i, std::span<const Index> phi) {
  check_assignment(m, obs);
  std::set<Index> seen;
  auto claim = [&](Index d, const char* role) {
    if (d < 0 || d >= m.num_variables()) fail(ErrorKind::shape, std::string(role) + " index out of range");
    if (obs.count(d)) fail(ErrorKind::argument, std::string(role) + " " + std::to_string(d) + " is observed");
    if (!seen.insert(d).second) fail(ErrorKind::argument, std::string(role) + " " + std::to_string(d) + " repeated");
  };
  claim(i, "candidate");
  if (phi.empty()) fail(ErrorKind::argument, "target set is empty");
  for (Index d : phi) claim(d, "target");
}

Assignment merged(const Assignment& a, const Assignment& b) {
  Assignment out = a;
  out.insert(b.begin(), b.end());
  return out;
}

double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;
    s += p[k] * (std::log(p[k]) - std::log(q[k]));
  }
  return s;
}

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

}  // namespace

void TabularModel::validate() const {
  const Index z = latent_cardinality();
  if (z < 1) fail(ErrorKind::config, "latent variable needs at least one state", "prior");
  if (z > kMaxCardinality) fail(ErrorKind::capability, "latent cardinality exceeds 8", "prior");
  if (num_variables() > kMaxVariables) fail(ErrorKind::capability, "more than 8 variables", "variables");
  double s = 0.0;
  for (double p : prior) {
    if (!(p >= 0.0)) fail(ErrorKind::config, "negative prior probability", "prior");
    s += p;
  }
  if (std::abs(s - 1.0) > kNormTol) fail(ErrorKind::config, "prior does not sum to 1", "prior");
  for (Index d = 0; d < num_variables(); ++d) {
    const Matrix& t = conditionals[static_cast<std::size_t>(d)];
    const std::string field = "variables[" + std::to_string(d) + "]";
    if (t.rows() != z) fail(ErrorKind::shape, field + ": one row per latent state expected", field);
    if (t.cols() < 1) fail(ErrorKind::config, field + ": empty table", field);
    if (t.cols() > kMaxCardinality) fail(ErrorKind::capability, field + ": cardinality exceeds 8", field);
    if ((t.array() < 0.0).any()) fail(ErrorKind::config, field + ": negative probability", field);
    for (Index r = 0; r < z; ++r) {
      if (std::abs(t.row(r).sum() - 1.0) > kNormTol) fail(ErrorKind::config, field + ": row does not sum to 1", field);
    }
  }
}

TabularModel random_model(Index num_variables, Index max_cardinality, Index latent_cardinality, Rng& rng) {
  auto dirichlet = [&rng](Index k) {
    std::vector<double> v(static_cast<std::size_t>(k));
    double s = 0.0;
    for (auto& x : v) {
      x = -std::log(1.0 - rng.uniform());  // Gamma(1)
      s += x;
    }
    for (auto& x : v) x /= s;
    return v;
  };
  TabularModel m;
  m.prior = dirichlet(latent_cardinality);
  for (Index d = 0; d < num_variables; ++d) {
    const Index card = 2 + static_cast<Index>(rng.index(static_cast<std::size_t>(std::max<Index>(max_cardinality - 1, 1))));
    Matrix t(latent_cardinality, std::min(card, max_cardinality));
    for (Index z = 0; z < latent_cardinality; ++z) {
      auto row = dirichlet(t.cols());
      for (Index c = 0; c < t.cols(); ++c) t(z, c) = row[static_cast<std::size_t>(c)];
    }
    m.conditionals.push_back(std::move(t));
    m.names.push_back("x" + std::to_string(d));
  }
  m.validate();
  return m;
}

TabularModel model_from_json(const nlohmann::json& j) {
  TabularModel m;
  try {
    m.prior = j.at("latent").at("prior").get<std::vector<double>>();
    for (const auto& v : j.at("variables")) {
      const auto rows = v.at("table").get<std::vector<std::vector<double>>>();
      Matrix t(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Index>(rows[r].size()) != t.cols()) fail(ErrorKind::shape, "ragged probability table", "table");
        for (std::size_t c = 0; c < rows[r].size(); ++c) t(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
      }
      m.names.push_back(v.value("name", "x" + std::to_string(m.conditionals.size())));
      m.conditionals.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::config, std::string("malformed tabular model: ") + e.what(), "model");
  }
  m.validate();
  return m;
}

nlohmann::json to_json(const TabularModel& m) {
  nlohmann::json vars = nlohmann::json::array();
  for (std::size_t d = 0; d < m.conditionals.size(); ++d) {
    std::vector<std::vector<double>> rows;
    for (Index r = 0; r < m.conditionals[d].rows(); ++r) {
      std::vector<double> row;
      for (Index c = 0; c < m.conditionals[d].cols(); ++c) row.push_back(m.conditionals[d](r, c));
      rows.push_back(std::move(row));
    }
    vars.push_back({{"name", d < m.names.size() ? m.names[d] : "x" + std::to_string(d)}, {"table", rows}});
  }
  return nlohmann::json{{"latent", {{"prior", m.prior}}}, {"variables", vars}};
}

std::vector<double> exact_posterior(const TabularModel& m, const Assignment& obs) {
  check_assignment(m, obs);
  const std::vector<double> lj = log_joint(m, obs);
  const double lz = log_sum_exp(lj);
  if (!std::isfinite(lz)) fail(ErrorKind::evidence, "observed values have zero probability", "obs");
  std::vector<double> post(lj.size());
  for (std::size_t z = 0; z < lj.size(); ++z) post[z] = std::exp(lj[z] - lz);
  return post;
}

double conditional_probability(const TabularModel& m, const Assignment& values, const Assignment& obs) {
  check_assignment(m, values);
  const std::vector<double> post = exact_posterior(m, obs);
  std::vector<double> terms(post.size());
  for (std::size_t z = 0; z < post.size(); ++z) {
    double s = safe_log(post[z]);
    for (const auto& [d, v] : values) s += safe_log(m.conditionals[static_cast<std::size_t>(d)](static_cast<Index>(z), v));
    terms[z] = s;
  }
  return std::exp(log_sum_exp(terms));
}

std::vector<Assignment> enumerate(const TabularModel& m, std::span<const Index> vars) {
  std::vector<Assignment> out{Assignment{}};
  for (Index d : vars) {
    std::vector<Assignment> next;
    for (const auto& a : out) {
      for (Index v = 0; v < m.cardinality(d); ++v) {
        Assignment b = a;
        b[d] = v;
        next.push_back(std::move(b));
      }
    }
    out = std::move(next);
  }
  return out;
}

double reward_direct(const TabularModel& m, const Assignment& obs, Index i, std::span<const Index> phi) {
  check_query(m, obs, i, phi);
  const std::vector<Assignment> phis = enumerate(m, phi);
  std::vector<double> prior_phi(phis.size());
  for (std::size_t k = 0; k < phis.size(); ++k) prior_phi[k] = conditional_probability(m, phis[k], obs);
  double reward = 0.0;
  for (Index v = 0; v < m.cardinality(i); ++v) {
    const Assignment xi{{i, v}};
    const double p_i = conditional_probability(m, xi, obs);
    if (p_i <= 0.0) continue;
    const Assignment obs_i = merged(obs, xi);
    std::vector<double> post_phi(phis.size());
    for (std::size_t k = 0; k < phis.size(); ++k) post_phi[k] = conditional_probability(m, phis[k], obs_i);
    reward += p_i * kl(post_phi, prior_phi);
  }
  return reward;
}

double reward_latent(const TabularModel& m, const Assignment& obs, Index i, std::span<const Index> phi) {
  check_query(m, obs, i, phi);
  const std::vector<double> post_o = exact_posterior(m, obs);
  double gain = 0.0;
  for (Index v = 0; v < m.cardinality(i); ++v) {
    const Assignment xi{{i, v}};
    const double p_i = conditional_probability(m, xi, obs);
    if (p_i <= 0.0) continue;
    gain += p_i * kl(exact_posterior(m, merged(obs, xi)), post_o);
  }
  double overlap = 0.0;
  for (const Assignment& xp : enumerate(m, phi)) {
    for (Index v = 0; v < m.cardinality(i); ++v) {
      const Assignment joint = merged(xp, Assignment{{i, v}});
      const double p = conditional_probability(m, joint, obs);
      if (p <= 0.0) continue;
      overlap += p * kl(exact_posterior(m, merged(obs, joint)), exact_posterior(m, merged(obs, xp)));
    }
  }
  return gain - overlap;
}

BaldTerms bald_decomposition(const TabularModel& m, const Assignment& obs, Index i, std::span<const Index> phi) {
  check_query(m, obs, i, phi);
  const std::vector<Assignment> phis = enumerate(m, phi);
  // I(z; x_phi | c) = H(z | c) - E_{x_phi | c} H(z | x_phi, c)
  auto mutual_information = [&](const Assignment& context) {
    double expected = 0.0;
    for (const auto& xp : phis) {
      const double p = conditional_probability(m, xp, context);
      if (p <= 0.0) continue;
      expected += p * entropy(exact_posterior(m, merged(context, xp)));
    }
    return entropy(exact_posterior(m, context)) - expected;
  };
  BaldTerms t;
  t.term_a = mutual_information(obs);
  for (Index v = 0; v < m.cardinality(i); ++v) {
    const Assignment xi{{i, v}};
    const double p_i = conditional_probability(m, xi, obs);
    if (p_i <= 0.0) continue;
    t.term_b += p_i * mutual_information(merged(obs, xi));
  }
  return t;
}

}  // namespace eddi::oracle
