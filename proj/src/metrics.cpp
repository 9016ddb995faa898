#include "eddi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "eddi/error.hpp"

namespace eddi {

double auic(const InfoCurve& curve, bool grouped) {
  if (curve.steps.empty()) fail(ErrorKind::argument, "information curve is empty");
  double total = 0.0;
  if (!grouped) {
    for (const auto& s : curve.steps) total += s.neg_log_likelihood;
    return total;
  }
  for (std::size_t k = 1; k < curve.steps.size(); ++k) {
    const auto& a = curve.steps[k - 1];
    const auto& b = curve.steps[k];
    total += 0.5 * (a.neg_log_likelihood + b.neg_log_likelihood) * (b.cumulative_cost - a.cumulative_cost);
  }
  return total;
}

MeanStderr summarize(const std::vector<double>& values) {
  MeanStderr out;
  out.count = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double var = ss / static_cast<double>(values.size() - 1);
    out.std_error = std::sqrt(var / static_cast<double>(values.size()));
  }
  return out;
}

std::map<std::string, double> average_ranking(const std::vector<RankEntry>& entries) {
  std::set<std::string> methods;
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> cells;
  for (const auto& e : entries) {
    methods.insert(e.method);
    auto& cell = cells[{e.dataset, e.point}];
    if (!cell.emplace(e.method, e.auic).second) {
      fail(ErrorKind::argument, "duplicate AUIC for " + e.method + " on " + e.dataset + "/" + e.point);
    }
  }
  if (methods.empty()) fail(ErrorKind::argument, "no AUIC entries to rank");

  std::string gaps;
  for (const auto& [key, cell] : cells) {
    for (const auto& m : methods) {
      if (!cell.count(m)) gaps += (gaps.empty() ? "" : ", ") + m + "@" + key.first + "/" + key.second;
    }
  }
  if (!gaps.empty()) fail(ErrorKind::data, "ranking coverage gaps: " + gaps, "auic");

  std::map<std::string, double> total;
  for (const auto& m : methods) total[m] = 0.0;
  for (const auto& [key, cell] : cells) {
    std::vector<std::pair<double, std::string>> order;
    for (const auto& [m, v] : cell) order.emplace_back(v, m);
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j < order.size() && order[j].first == order[i].first) ++j;
      const double rank = 0.5 * static_cast<double>(i + 1 + j);
      for (std::size_t k = i; k < j; ++k) total[order[k].second] += rank;
      i = j;
    }
  }
  for (auto& [m, v] : total) v /= static_cast<double>(cells.size());
  return total;
}

}  // namespace eddi
