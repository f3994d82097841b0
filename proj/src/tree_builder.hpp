#pragma once

// Tree growers shared by the tree, forest, AdaBoost and Gbdt learners.

#include <cstddef>
#include <span>
#include <vector>

#include "loadshift/core.hpp"
#include "loadshift/learners.hpp"

namespace loadshift::detail {

/// Dense row-major copy of a matrix's features.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  explicit FeatureMatrix(const LabeledMatrix& m);
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

struct GiniTreeOptions {
  int max_depth = 6;
  int min_leaf = 5;
  std::size_t features_per_split = 0;  // 0 or >= cols: every feature, in index order
};

/// CART on `sample` (row indices, duplicates allowed for bootstrap) with
/// per-row weights. Leaf values are weighted positive fractions.
/// `rng` is only consulted when features are subsampled.
DecisionTree grow_gini_tree(const FeatureMatrix& x, std::span<const int> labels,
                            std::span<const double> weights, std::vector<std::size_t> sample,
                            const GiniTreeOptions& options, Rng* rng);

struct GradientTreeOptions {
  int max_depth = 3;
  int min_leaf = 5;
  double l2_lambda = 1.0;
  double learning_rate = 0.1;
};

/// Second-order regression tree on gradients/hessians. Leaf value is
/// -G/(H + lambda) scaled by the learning rate.
DecisionTree grow_gradient_tree(const FeatureMatrix& x, std::span<const double> grad,
                                std::span<const double> hess, const GradientTreeOptions& options);

/// Split point strictly between a < b that keeps a on the left.
double midpoint(double a, double b);

}  // namespace loadshift::detail
