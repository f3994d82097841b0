#pragma once

// Fixtures and independent reference implementations shared by the test
// binaries. Nothing here calls into the code under test except for the
// plain data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "loadshift/agents.hpp"
#include "loadshift/explainers.hpp"
#include "loadshift/features.hpp"
#include "loadshift/ingest.hpp"
#include "loadshift/learners.hpp"

namespace testing {

using namespace loadshift;

inline constexpr Timestamp kJan1 = 1420070400;  // 2015-01-01 00:00 UTC, a Thursday

/// Hourly table of `hours` rows from `start` with zero loads and mild weather.
inline HourlyTable blank_table(std::size_t hours, std::size_t devices = 1, Timestamp start = kJan1) {
  HourlyTable t;
  t.household_id = "t";
  for (std::size_t d = 0; d < devices; ++d) t.device_names.push_back("Device " + std::to_string(d + 1));
  for (std::size_t i = 0; i < hours; ++i) {
    HourlyRow r;
    r.time = start + static_cast<Timestamp>(i) * kSecondsPerHour;
    r.device_loads.assign(devices, 0.0);
    r.aggregate_load = 100.0;
    r.weather = {10.0, 5.0, 70.0, 180.0, 10.0};
    r.price = 0.2;
    t.rows.push_back(r);
  }
  return t;
}

/// Random binary-labelled matrix; the label leans on the first two features.
inline LabeledMatrix random_matrix(std::size_t rows, std::size_t width, std::uint64_t seed, double noise = 0.5) {
  Rng rng(seed);
  LabeledMatrix m;
  for (std::size_t j = 0; j < width; ++j) {
    m.feature_names.push_back("f" + std::to_string(j));
    m.groups.push_back(j + 2 >= width && width > 2 ? FeatureGroup::Weather : FeatureGroup::NonWeather);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    LabeledRow r;
    for (std::size_t j = 0; j < width; ++j) r.features.push_back(rng.normal());
    const double z = r.features[0] + (width > 1 ? 0.7 * r.features[1] : 0.0) + noise * rng.normal();
    r.label = z > 0 ? 1 : 0;
    r.time = kJan1 + static_cast<Timestamp>(i) * kSecondsPerHour;
    m.rows.push_back(std::move(r));
  }
  return m;
}

/// Mann-Whitney by explicit pair counting.
inline double auc_by_pairs(std::span<const double> s, std::span<const int> y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

/// Interventional value of a coalition, written out directly.
inline double masked_value(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                           const std::vector<std::vector<double>>& background, const std::vector<bool>& present) {
  double total = 0;
  std::vector<double> z(x.size());
  for (const auto& b : background) {
    for (std::size_t j = 0; j < x.size(); ++j) z[j] = present[j] ? x[j] : b[j];
    total += f(z);
  }
  return total / static_cast<double>(background.size());
}

/// Shapley values as the mean marginal contribution over every feature
/// ordering. Independent of the subset-weight formula; practical for M <= 8.
inline std::vector<double> shapley_by_permutations(const std::function<double(std::span<const double>)>& f,
                                                   std::span<const double> x,
                                                   const std::vector<std::vector<double>>& background) {
  const std::size_t m = x.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(m, 0.0);
  double count = 0;
  do {
    std::vector<bool> present(m, false);
    double prev = masked_value(f, x, background, present);
    for (std::size_t j : order) {
      present[j] = true;
      const double cur = masked_value(f, x, background, present);
      phi[j] += cur - prev;
      prev = cur;
    }
    count += 1;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& v : phi) v /= count;
  return phi;
}

struct OracleChoice {
  int start = -1;
  double cost = std::numeric_limits<double>::infinity();
};

/// Exhaustive scan over all 24 start hours for one device.
inline OracleChoice cheapest_start(const std::array<double, 24>& availability, const std::vector<double>& load,
                                   const std::vector<double>& prices, double availability_threshold, bool strict) {
  OracleChoice best;
  const int d = static_cast<int>(load.size());
  for (int h = 0; h < 24; ++h) {
    if (h + d > 24) continue;
    bool ok = availability[static_cast<std::size_t>(h)] >= availability_threshold;
    if (strict) {
      for (int i = 0; i < d; ++i) ok = ok && availability[static_cast<std::size_t>(h + i)] >= availability_threshold;
    }
    if (!ok) continue;
    double cost = 0;
    for (int i = 0; i < d; ++i) cost += prices[static_cast<std::size_t>(h + i)] * load[static_cast<std::size_t>(i)] / 1000.0;
    if (cost < best.cost) best = {h, cost};
  }
  return best;
}

}  // namespace testing
