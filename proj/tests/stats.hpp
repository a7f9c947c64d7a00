#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "qsdfv/fv_simulator.hpp"

namespace stats {

using qsdfv::ConfigurationWeight;

// Two-sample chi-squared homogeneity test on count histograms.
inline double homogeneity_p_value(const std::map<std::size_t, double>& a, const std::map<std::size_t, double>& b) {
  std::vector<std::pair<double, double>> bins;
  double ta = 0.0;
  double tb = 0.0;
  std::map<std::size_t, std::pair<double, double>> merged;
  for (auto [k, v] : a) merged[k].first += v;
  for (auto [k, v] : b) merged[k].second += v;
  for (auto& [k, v] : merged) {
    ta += v.first;
    tb += v.second;
  }
  // pool sparse tail cells until every expected count is at least 5
  std::pair<double, double> pending{0.0, 0.0};
  for (auto& [k, v] : merged) {
    pending.first += v.first;
    pending.second += v.second;
    const double total = pending.first + pending.second;
    if (std::min(total * ta, total * tb) / (ta + tb) >= 5.0) {
      bins.push_back(pending);
      pending = {0.0, 0.0};
    }
  }
  if (pending.first + pending.second > 0.0) {
    if (bins.empty()) return 1.0;
    bins.back().first += pending.first;
    bins.back().second += pending.second;
  }
  if (bins.size() < 2) return 1.0;
  double stat = 0.0;
  for (auto [x, y] : bins) {
    const double total = x + y;
    const double ea = total * ta / (ta + tb);
    const double eb = total * tb / (ta + tb);
    stat += (x - ea) * (x - ea) / ea + (y - eb) * (y - eb) / eb;
  }
  boost::math::chi_squared dist(static_cast<double>(bins.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

inline double tv_distance(const std::map<std::vector<std::uint32_t>, double>& a,
                   const std::vector<ConfigurationWeight>& exact) {
  double tv = 0.0;
  double covered = 0.0;
  for (const auto& c : exact) {
    const auto it = a.find(c.counts);
    const double f = it == a.end() ? 0.0 : it->second;
    covered += f;
    tv += std::abs(f - c.weight);
  }
  return 0.5 * (tv + (1.0 - covered));
}

}  // namespace stats
