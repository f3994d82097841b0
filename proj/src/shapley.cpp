#include <bit>
#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Dense>

#include "loadshift/explainers.hpp"

namespace loadshift {

namespace {

std::vector<std::string> names_or_default(std::vector<std::string> names, std::size_t m) {
  if (names.empty()) {
    for (std::size_t j = 0; j < m; ++j) names.push_back("x" + std::to_string(j));
  }
  if (names.size() != m) throw InputError("feature name count does not match instance width");
  return names;
}

void check_inputs(std::span<const double> instance, const BackgroundSet& background) {
  if (instance.empty()) throw InputError("cannot explain an instance with zero features");
  if (background.rows.empty()) throw InputError("background set is empty");
  for (const auto& r : background.rows) {
    if (r.size() != instance.size()) throw InputError("background row width mismatch");
  }
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

/// Shapley kernel weight of one coalition of size s among m features.
double kernel_weight(std::size_t m, std::size_t s) {
  return static_cast<double>(m - 1) /
         (binomial(m, s) * static_cast<double>(s) * static_cast<double>(m - s));
}

// Solves the efficiency-constrained weighted least squares problem
//   min sum_S w_S (v(S) - v0 - sum_{j in S} phi_j)^2  s.t. sum phi = delta
// by substituting phi_{m-1} = delta - sum_{j<m-1} phi_j.
class ConstrainedWls {
 public:
  ConstrainedWls(std::size_t m, double delta)
      : m_(m), delta_(delta), ata_(Eigen::MatrixXd::Zero(m - 1, m - 1)), atb_(Eigen::VectorXd::Zero(m - 1)) {}

  void add(std::uint64_t mask, double gain, double weight) {
    const double last = (mask >> (m_ - 1)) & 1U ? 1.0 : 0.0;
    Eigen::VectorXd a(m_ - 1);
    for (std::size_t j = 0; j + 1 < m_; ++j) a[j] = ((mask >> j) & 1U ? 1.0 : 0.0) - last;
    const double t = gain - last * delta_;
    ata_.noalias() += weight * a * a.transpose();
    atb_.noalias() += weight * t * a;
  }

  std::vector<double> solve() const {
    const Eigen::VectorXd beta = ata_.completeOrthogonalDecomposition().solve(atb_);
    std::vector<double> phi(m_);
    double partial = 0;
    for (std::size_t j = 0; j + 1 < m_; ++j) {
      phi[j] = beta[static_cast<Eigen::Index>(j)];
      partial += phi[j];
    }
    phi[m_ - 1] = delta_ - partial;
    return phi;
  }

 private:
  std::size_t m_;
  double delta_;
  Eigen::MatrixXd ata_;
  Eigen::VectorXd atb_;
};

// ---------------------------------------------------------------------------
// Interventional TreeSHAP
// ---------------------------------------------------------------------------

class InterventionalTreeShap {
 public:
  InterventionalTreeShap(std::span<const double> x, std::size_t max_depth)
      : x_(x), owner_(x.size(), kNone) {
    // weight_[a][b] = a! b! / (a + b + 1)!
    const std::size_t n = max_depth + 2;
    weight_.assign(n, std::vector<double>(n, 0.0));
    std::vector<double> fact(2 * n + 2, 1.0);
    for (std::size_t i = 1; i < fact.size(); ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) weight_[a][b] = fact[a] * fact[b] / fact[a + b + 1];
    }
  }

  /// Adds scale * phi(tree, x, r) into phi.
  void accumulate(const DecisionTree& tree, std::span<const double> r, double scale, std::vector<double>& phi) {
    tree_ = &tree;
    r_ = r;
    scale_ = scale;
    phi_ = &phi;
    recurse(0);
  }

 private:
  static constexpr char kNone = 0, kFromX = 1, kFromR = 2;

  void recurse(std::size_t node) {
    const TreeNode& n = tree_->nodes[node];
    if (n.feature < 0) {
      leaf(n.value);
      return;
    }
    const auto j = static_cast<std::size_t>(n.feature);
    const auto x_child = static_cast<std::size_t>(x_[j] <= n.threshold ? n.left : n.right);
    const auto r_child = static_cast<std::size_t>(r_[j] <= n.threshold ? n.left : n.right);
    if (owner_[j] == kFromX) {
      recurse(x_child);
    } else if (owner_[j] == kFromR) {
      recurse(r_child);
    } else if (x_child == r_child) {
      recurse(x_child);
    } else {
      path_.push_back(j);
      owner_[j] = kFromX;
      ++n_x_;
      recurse(x_child);
      --n_x_;
      owner_[j] = kFromR;
      ++n_r_;
      recurse(r_child);
      --n_r_;
      owner_[j] = kNone;
      path_.pop_back();
    }
  }

  void leaf(double value) {
    if (path_.empty()) return;
    const double v = value * scale_;
    // Leaf is reached iff every x-owned feature comes from x and every
    // r-owned feature from r; the Shapley value of that unanimity-style game.
    const double gain = n_x_ > 0 ? v * weight_[n_x_ - 1][n_r_] : 0.0;
    const double loss = n_r_ > 0 ? v * weight_[n_x_][n_r_ - 1] : 0.0;
    for (std::size_t j : path_) {
      if (owner_[j] == kFromX) {
        (*phi_)[j] += gain;
      } else {
        (*phi_)[j] -= loss;
      }
    }
  }

  std::span<const double> x_;
  std::vector<char> owner_;
  std::vector<std::size_t> path_;
  std::size_t n_x_ = 0;
  std::size_t n_r_ = 0;
  std::vector<std::vector<double>> weight_;
  const DecisionTree* tree_ = nullptr;
  std::span<const double> r_;
  double scale_ = 1.0;
  std::vector<double>* phi_ = nullptr;
};

}  // namespace

std::string_view to_string(OutputSpace s) { return s == OutputSpace::LogOdds ? "log_odds" : "probability"; }

double Attribution::surrogate_output() const {
  double s = base_value;
  for (double c : contributions) s += c;
  return s;
}

double Attribution::surrogate_probability() const {
  const double g = surrogate_output();
  return output_space == OutputSpace::LogOdds ? sigmoid(g) : g;
}

ModelFunction probability_function(const TrainedModel& model) {
  return [&model](std::span<const double> x) { return model.predict_proba(x); };
}

ModelFunction native_function(const TrainedModel& model) {
  return [&model](std::span<const double> x) { return model.predict_native(x); };
}

BackgroundSet sample_background(const LabeledMatrix& train, std::size_t size, std::uint64_t seed) {
  if (train.rows.empty()) throw DataError("cannot draw a background set from an empty matrix");
  BackgroundSet bg;
  bg.seed = seed;
  const std::size_t n = train.rows.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  const std::size_t take = std::min(size, n);
  Rng rng(seed);
  for (std::size_t i = 0; i < take && take < n; ++i) {
    std::swap(idx[i], idx[i + rng.index(n - i)]);
  }
  idx.resize(take);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i : idx) bg.rows.push_back(train.rows[i].features);
  return bg;
}

double coalition_value(const ModelFunction& f, std::span<const double> instance, const BackgroundSet& background,
                       std::uint64_t coalition) {
  std::vector<double> z(instance.size());
  double sum = 0;
  for (const auto& r : background.rows) {
    for (std::size_t j = 0; j < instance.size(); ++j) z[j] = (coalition >> j) & 1U ? instance[j] : r[j];
    sum += f(z);
  }
  return sum / static_cast<double>(background.rows.size());
}

// v(S) for every coalition mask. A background row that already agrees with
// the instance on some features yields the same masked input for several
// masks, so f is called once per distinct input and summed in row order.
std::vector<double> all_coalition_values(const ModelFunction& f, std::span<const double> instance,
                                         const BackgroundSet& background) {
  const std::size_t m = instance.size();
  const std::uint64_t count = std::uint64_t{1} << m;
  std::vector<double> total(count, 0.0);
  std::vector<double> z(m);
  std::vector<std::size_t> differing;
  std::vector<double> values;
  for (const auto& r : background.rows) {
    differing.clear();
    std::uint64_t diff = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (!(r[j] == instance[j])) {
        differing.push_back(j);
        diff |= std::uint64_t{1} << j;
      }
    }
    const std::size_t subsets = std::size_t{1} << differing.size();
    values.assign(subsets, 0.0);
    for (std::size_t t = 0; t < subsets; ++t) {
      std::copy(r.begin(), r.end(), z.begin());
      for (std::size_t b = 0; b < differing.size(); ++b) {
        if ((t >> b) & 1U) z[differing[b]] = instance[differing[b]];
      }
      values[t] = f(z);
    }
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      const std::uint64_t hit = mask & diff;
      std::size_t t = 0;
      for (std::size_t b = 0; b < differing.size(); ++b) {
        if ((hit >> differing[b]) & 1U) t |= std::size_t{1} << b;
      }
      total[mask] += values[t];
    }
  }
  for (auto& v : total) v /= static_cast<double>(background.rows.size());
  return total;
}

Attribution kernel_shap(const ModelFunction& f, std::span<const double> instance, const BackgroundSet& background,
                        std::size_t n_samples, std::uint64_t seed, std::vector<std::string> feature_names) {
  check_inputs(instance, background);
  const std::size_t m = instance.size();
  if (m > 62) throw InputError("kernel_shap supports at most 62 features");
  Attribution out;
  out.feature_names = names_or_default(std::move(feature_names), m);
  out.output_space = OutputSpace::Probability;
  out.base_value = coalition_value(f, instance, background, 0);
  const double fx = f(instance);
  const double delta = fx - out.base_value;
  if (m == 1) {
    out.contributions = {delta};
    return out;
  }

  ConstrainedWls wls(m, delta);
  const std::uint64_t full = (std::uint64_t{1} << m) - 1;
  if (m <= kKernelShapExactLimit) {
    const std::vector<double> v = all_coalition_values(f, instance, background);
    for (std::uint64_t mask = 1; mask < full; ++mask) {
      const auto s = static_cast<std::size_t>(std::popcount(mask));
      wls.add(mask, v[mask] - out.base_value, kernel_weight(m, s));
    }
  } else {
    if (n_samples == 0) throw InputError("kernel_shap sampling mode needs n_samples > 0");
    // Coalition size s carries total kernel mass (m-1)/(s(m-s)).
    std::vector<double> cdf(m - 1);
    double total = 0;
    for (std::size_t s = 1; s < m; ++s) {
      total += static_cast<double>(m - 1) / static_cast<double>(s * (m - s));
      cdf[s - 1] = total;
    }
    Rng rng(seed);
    std::vector<std::size_t> perm(m);
    for (std::size_t i = 0; i < n_samples; ++i) {
      const double u = rng.uniform() * total;
      const std::size_t s = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) + 1;
      for (std::size_t j = 0; j < m; ++j) perm[j] = j;
      std::uint64_t mask = 0;
      for (std::size_t k = 0; k < std::min(s, m - 1); ++k) {
        std::swap(perm[k], perm[k + rng.index(m - k)]);
        mask |= std::uint64_t{1} << perm[k];
      }
      wls.add(mask, coalition_value(f, instance, background, mask) - out.base_value, 1.0);
    }
  }
  out.contributions = wls.solve();
  return out;
}

Attribution exact_shapley_oracle(const ModelFunction& f, std::span<const double> instance,
                                 const BackgroundSet& background, std::vector<std::string> feature_names) {
  check_inputs(instance, background);
  const std::size_t m = instance.size();
  if (m > kShapleyOracleLimit) {
    throw InputError("exact Shapley enumeration is limited to " + std::to_string(kShapleyOracleLimit) +
                     " features");
  }
  const std::uint64_t count = std::uint64_t{1} << m;
  std::vector<double> v(count);
  for (std::uint64_t mask = 0; mask < count; ++mask) v[mask] = coalition_value(f, instance, background, mask);

  // |S|! (M - |S| - 1)! / M!
  std::vector<double> w(m);
  for (std::size_t s = 0; s < m; ++s) w[s] = 1.0 / (static_cast<double>(m) * binomial(m - 1, s));

  Attribution out;
  out.feature_names = names_or_default(std::move(feature_names), m);
  out.output_space = OutputSpace::Probability;
  out.base_value = v[0];
  out.contributions.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    for (std::uint64_t mask = 0; mask < count; ++mask) {
      if (mask & bit) continue;
      const auto s = static_cast<std::size_t>(std::popcount(mask));
      out.contributions[i] += w[s] * (v[mask | bit] - v[mask]);
    }
  }
  return out;
}

Attribution tree_shap_interventional(const TrainedModel& model, std::span<const double> instance,
                                     const BackgroundSet& background) {
  check_inputs(instance, background);
  if (instance.size() != model.width()) throw InputError("instance width does not match the model");

  std::vector<const DecisionTree*> trees;
  std::vector<double> weights;
  std::vector<DecisionTree> votes;
  double offset = 0.0;
  OutputSpace space = OutputSpace::Probability;
  if (const auto* p = std::get_if<TreeParams>(&model.parameters())) {
    trees.push_back(&p->tree);
  } else if (const auto* p = std::get_if<ForestParams>(&model.parameters())) {
    for (const auto& t : p->trees) trees.push_back(&t);
  } else if (const auto* p = std::get_if<GbdtParams>(&model.parameters())) {
    for (const auto& t : p->trees) trees.push_back(&t);
    weights.assign(trees.size(), 1.0);
    offset = p->base_score;
    space = OutputSpace::LogOdds;
  } else if (const auto* p = std::get_if<AdaBoostParams>(&model.parameters())) {
    // The vote share is an alpha-weighted mean of 0/1 stump votes.
    double total = 0;
    for (double a : p->alphas) total += a;
    if (total > 0) {
      for (std::size_t i = 0; i < p->stumps.size(); ++i) {
        DecisionTree vote = p->stumps[i];
        for (auto& node : vote.nodes) node.value = node.value >= 0.5 ? 1.0 : 0.0;
        votes.push_back(std::move(vote));
        weights.push_back(p->alphas[i] / total);
      }
      for (const auto& t : votes) trees.push_back(&t);
    } else {
      offset = p->fallback_probability;
    }
  } else {
    throw InputError("tree_shap_interventional does not support " + model.family() + " models");
  }
  if (weights.empty()) weights.assign(trees.size(), trees.empty() ? 1.0 : 1.0 / static_cast<double>(trees.size()));

  int max_depth = 0;
  for (const auto* t : trees) max_depth = std::max(max_depth, t->depth());

  const std::size_t m = instance.size();
  std::vector<double> phi(m, 0.0);
  const double per_row = 1.0 / static_cast<double>(background.rows.size());
  InterventionalTreeShap shap(instance, static_cast<std::size_t>(max_depth));
  double base = 0;
  for (const auto& r : background.rows) {
    double row_output = 0;
    for (std::size_t k = 0; k < trees.size(); ++k) {
      shap.accumulate(*trees[k], r, weights[k] * per_row, phi);
      row_output += weights[k] * trees[k]->predict(r);
    }
    base += row_output;
  }

  Attribution out;
  out.feature_names = model.feature_names();
  out.output_space = space;
  out.base_value = offset + base * per_row;
  out.contributions = std::move(phi);
  return out;
}

}  // namespace loadshift
