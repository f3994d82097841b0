#include "tree_builder.hpp"

#include <algorithm>
#include <cmath>

namespace loadshift::detail {

namespace {

// Splits must improve the objective by more than this to be kept.
constexpr double kMinGain = 1e-12;

struct SortedColumn {
  std::vector<std::pair<double, std::size_t>> cells;

  void load(const FeatureMatrix& x, std::span<const std::size_t> rows, std::size_t feature) {
    cells.clear();
    cells.reserve(rows.size());
    for (std::size_t r : rows) cells.emplace_back(x.at(r, feature), r);
    std::sort(cells.begin(), cells.end());
  }
};

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = kMinGain;
};

std::size_t partition_rows(const FeatureMatrix& x, std::span<std::size_t> rows, const Split& split) {
  auto mid = std::stable_partition(rows.begin(), rows.end(), [&](std::size_t r) {
    return x.at(r, static_cast<std::size_t>(split.feature)) <= split.threshold;
  });
  return static_cast<std::size_t>(mid - rows.begin());
}

double gini_mass(double w, double wp) { return w > 0 ? 2.0 * wp * (w - wp) / w : 0.0; }

class GiniGrower {
 public:
  GiniGrower(const FeatureMatrix& x, std::span<const int> labels, std::span<const double> weights,
             const GiniTreeOptions& options, Rng* rng)
      : x_(x), labels_(labels), weights_(weights), options_(options), rng_(rng) {}

  DecisionTree grow(std::vector<std::size_t> sample) {
    rows_ = std::move(sample);
    tree_.nodes.clear();
    if (!rows_.empty()) build(0, rows_.size(), 0);
    return std::move(tree_);
  }

 private:
  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> all(x_.cols);
    for (std::size_t j = 0; j < x_.cols; ++j) all[j] = j;
    const std::size_t m = options_.features_per_split;
    if (m == 0 || m >= x_.cols || rng_ == nullptr) return all;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + rng_->index(x_.cols - i);
      std::swap(all[i], all[j]);
    }
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
  }

  int build(std::size_t begin, std::size_t end, int depth) {
    double w = 0, wp = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t r = rows_[i];
      w += weights_[r];
      wp += weights_[r] * labels_[r];
    }
    const int node = static_cast<int>(tree_.nodes.size());
    TreeNode leaf;
    leaf.value = w > 0 ? wp / w : 0.0;
    tree_.nodes.push_back(leaf);

    const std::size_t count = end - begin;
    const auto min_leaf = static_cast<std::size_t>(std::max(options_.min_leaf, 1));
    if (depth >= options_.max_depth || count < 2 * min_leaf || wp <= 0.0 || wp >= w) return node;

    const double parent = gini_mass(w, wp);
    Split best;
    for (std::size_t f : candidate_features()) {
      column_.load(x_, std::span(rows_).subspan(begin, count), f);
      const auto& cells = column_.cells;
      double wl = 0, wpl = 0;
      for (std::size_t i = 0; i + 1 < count; ++i) {
        const std::size_t r = cells[i].second;
        wl += weights_[r];
        wpl += weights_[r] * labels_[r];
        if (cells[i].first == cells[i + 1].first) continue;
        const std::size_t nl = i + 1;
        if (nl < min_leaf || count - nl < min_leaf) continue;
        const double gain = parent - gini_mass(wl, wpl) - gini_mass(w - wl, wp - wpl);
        if (gain > best.gain) {
          best = {static_cast<int>(f), midpoint(cells[i].first, cells[i + 1].first), gain};
        }
      }
    }
    if (best.feature < 0) return node;

    const std::size_t mid =
        begin + partition_rows(x_, std::span(rows_).subspan(begin, count), best);
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    auto& n = tree_.nodes[static_cast<std::size_t>(node)];
    n.feature = best.feature;
    n.threshold = best.threshold;
    n.left = left;
    n.right = right;
    return node;
  }

  const FeatureMatrix& x_;
  std::span<const int> labels_;
  std::span<const double> weights_;
  GiniTreeOptions options_;
  Rng* rng_;
  std::vector<std::size_t> rows_;
  SortedColumn column_;
  DecisionTree tree_;
};

class GradientGrower {
 public:
  GradientGrower(const FeatureMatrix& x, std::span<const double> grad, std::span<const double> hess,
                 const GradientTreeOptions& options)
      : x_(x), grad_(grad), hess_(hess), options_(options) {}

  DecisionTree grow() {
    rows_.resize(x_.rows);
    for (std::size_t i = 0; i < x_.rows; ++i) rows_[i] = i;
    if (!rows_.empty()) build(0, rows_.size(), 0);
    return std::move(tree_);
  }

 private:
  double score(double g, double h) const { return g * g / (h + options_.l2_lambda); }

  int build(std::size_t begin, std::size_t end, int depth) {
    double g = 0, h = 0;
    for (std::size_t i = begin; i < end; ++i) {
      g += grad_[rows_[i]];
      h += hess_[rows_[i]];
    }
    const int node = static_cast<int>(tree_.nodes.size());
    TreeNode leaf;
    const double denom = h + options_.l2_lambda;
    leaf.value = denom > 0 ? -g / denom * options_.learning_rate : 0.0;
    tree_.nodes.push_back(leaf);

    const std::size_t count = end - begin;
    const auto min_leaf = static_cast<std::size_t>(std::max(options_.min_leaf, 1));
    if (depth >= options_.max_depth || count < 2 * min_leaf || denom <= 0) return node;

    const double parent = score(g, h);
    Split best;
    for (std::size_t f = 0; f < x_.cols; ++f) {
      column_.load(x_, std::span(rows_).subspan(begin, count), f);
      const auto& cells = column_.cells;
      double gl = 0, hl = 0;
      for (std::size_t i = 0; i + 1 < count; ++i) {
        const std::size_t r = cells[i].second;
        gl += grad_[r];
        hl += hess_[r];
        if (cells[i].first == cells[i + 1].first) continue;
        const std::size_t nl = i + 1;
        if (nl < min_leaf || count - nl < min_leaf) continue;
        if (hl + options_.l2_lambda <= 0 || (h - hl) + options_.l2_lambda <= 0) continue;
        const double gain = 0.5 * (score(gl, hl) + score(g - gl, h - hl) - parent);
        if (gain > best.gain) {
          best = {static_cast<int>(f), midpoint(cells[i].first, cells[i + 1].first), gain};
        }
      }
    }
    if (best.feature < 0) return node;

    const std::size_t mid =
        begin + partition_rows(x_, std::span(rows_).subspan(begin, count), best);
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid, end, depth + 1);
    auto& n = tree_.nodes[static_cast<std::size_t>(node)];
    n.feature = best.feature;
    n.threshold = best.threshold;
    n.left = left;
    n.right = right;
    return node;
  }

  const FeatureMatrix& x_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  GradientTreeOptions options_;
  std::vector<std::size_t> rows_;
  SortedColumn column_;
  DecisionTree tree_;
};

}  // namespace

FeatureMatrix::FeatureMatrix(const LabeledMatrix& m) : rows(m.rows.size()), cols(m.width()) {
  data.reserve(rows * cols);
  for (const auto& r : m.rows) {
    if (r.features.size() != cols) throw InvariantError("row width mismatch");
    for (double v : r.features) {
      if (!std::isfinite(v)) throw InvariantError("non-finite feature value in training data");
      data.push_back(v);
    }
  }
}

double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return (m >= b) ? a : m;
}

DecisionTree grow_gini_tree(const FeatureMatrix& x, std::span<const int> labels,
                            std::span<const double> weights, std::vector<std::size_t> sample,
                            const GiniTreeOptions& options, Rng* rng) {
  return GiniGrower(x, labels, weights, options, rng).grow(std::move(sample));
}

DecisionTree grow_gradient_tree(const FeatureMatrix& x, std::span<const double> grad,
                                std::span<const double> hess, const GradientTreeOptions& options) {
  return GradientGrower(x, grad, hess, options).grow();
}

}  // namespace loadshift::detail
