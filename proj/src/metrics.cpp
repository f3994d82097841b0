#include <algorithm>
#include <numeric>

#include "loadshift/learners.hpp"

namespace loadshift {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("auc needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based midranks of the positives; every value is a multiple of 1/2,
  // so the sum is exact in double precision.
  double rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double mse(std::span<const double> profile, const std::vector<std::vector<double>>& cycles) {
  if (profile.empty()) throw InputError("mse: profile is empty");
  if (cycles.empty()) throw DataError("mse: no cycles to compare against");
  double sum = 0;
  for (const auto& c : cycles) {
    for (std::size_t i = 0; i < profile.size(); ++i) {
      const double actual = i < c.size() ? c[i] : 0.0;
      sum += (profile[i] - actual) * (profile[i] - actual);
    }
  }
  return sum / static_cast<double>(cycles.size() * profile.size());
}

}  // namespace loadshift
