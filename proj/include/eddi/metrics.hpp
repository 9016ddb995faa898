#pragma once

#include <map>
#include <string>
#include <vector>

#include "eddi/acquisition.hpp"

namespace eddi {

// Ungrouped: sum of per-step negative log-likelihoods. Grouped: area under the
// piecewise-linear interpolant of (cumulative cost, NLL).
double auic(const InfoCurve& curve, bool grouped);

struct MeanStderr {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

MeanStderr summarize(const std::vector<double>& values);

// One AUIC value of `method` on test point `point` of `dataset`.
struct RankEntry {
  std::string method;
  std::string dataset;
  std::string point;
  double auic = 0.0;
};

// Per test point, methods are ranked by ascending AUIC (ties share the
// average rank); the result is the mean rank over all test points of all
// datasets. A missing (method, point) cell is an error listing the gaps.
std::map<std::string, double> average_ranking(const std::vector<RankEntry>& entries);

}  // namespace eddi
