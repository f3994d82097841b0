#include "loadshift/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tree_builder.hpp"

namespace loadshift {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw InputError("invalid hyperparameter: " + what);
}

// Fixed node keys keep serialized trees compact and stable.
json tree_to_json(const DecisionTree& t) {
  json feature = json::array(), threshold = json::array(), left = json::array(),
       right = json::array(), value = json::array();
  for (const auto& n : t.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}};
}

DecisionTree tree_from_json(const json& j) {
  DecisionTree t;
  const auto& f = j.at("feature");
  t.nodes.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    auto& n = t.nodes[i];
    n.feature = f[i].get<int>();
    n.threshold = j.at("threshold")[i].get<double>();
    n.left = j.at("left")[i].get<int>();
    n.right = j.at("right")[i].get<int>();
    n.value = j.at("value")[i].get<double>();
  }
  for (const auto& n : t.nodes) {
    const int size = static_cast<int>(t.nodes.size());
    if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size)) {
      throw InputError("corrupt tree in model file");
    }
  }
  return t;
}

json trees_to_json(const std::vector<DecisionTree>& trees) {
  json a = json::array();
  for (const auto& t : trees) a.push_back(tree_to_json(t));
  return a;
}

std::vector<DecisionTree> trees_from_json(const json& j) {
  std::vector<DecisionTree> out;
  for (const auto& t : j) out.push_back(tree_from_json(t));
  return out;
}

json standardization_to_json(const Standardization& s) {
  if (s.empty()) return nullptr;
  return {{"mean", s.mean}, {"scale", s.scale}};
}

Standardization standardization_from_json(const json& j) {
  Standardization s;
  if (j.is_null()) return s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.scale = j.at("scale").get<std::vector<double>>();
  return s;
}

std::vector<int> labels_of(const LabeledMatrix& m) {
  std::vector<int> y;
  y.reserve(m.rows.size());
  for (const auto& r : m.rows) y.push_back(r.label);
  return y;
}

// ---------------------------------------------------------------------------
// Per-family fitting
// ---------------------------------------------------------------------------

LogitParams fit_logit(const LogitSpec& spec, const LabeledMatrix& train) {
  LogitParams p;
  p.standardization = Standardization::fit(train);
  const std::size_t n = train.rows.size();
  const std::size_t m = train.width();
  std::vector<std::vector<double>> z;
  z.reserve(n);
  for (const auto& r : train.rows) z.push_back(p.standardization.apply(r.features));

  // Step 1/L with L bounding the Hessian: 0.25 * (1 + sum_j mean z_j^2) + lambda.
  double trace = 1.0;
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0;
    for (const auto& row : z) s += row[j] * row[j];
    trace += s / static_cast<double>(n);
  }
  const double step = 1.0 / (0.25 * trace + spec.l2_lambda);

  p.weights.assign(m, 0.0);
  p.intercept = 0.0;
  std::vector<double> grad(m);
  for (int iter = 0; iter < spec.max_iters; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double grad_b = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double eta = p.intercept;
      for (std::size_t j = 0; j < m; ++j) eta += p.weights[j] * z[i][j];
      const double r = sigmoid(eta) - train.rows[i].label;
      grad_b += r;
      for (std::size_t j = 0; j < m; ++j) grad[j] += r * z[i][j];
    }
    double norm2 = 0;
    grad_b /= static_cast<double>(n);
    norm2 += grad_b * grad_b;
    for (std::size_t j = 0; j < m; ++j) {
      grad[j] = grad[j] / static_cast<double>(n) + spec.l2_lambda * p.weights[j];
      norm2 += grad[j] * grad[j];
    }
    if (std::sqrt(norm2) < spec.tol) break;
    p.intercept -= step * grad_b;
    for (std::size_t j = 0; j < m; ++j) p.weights[j] -= step * grad[j];
  }
  return p;
}

KnnParams fit_knn(const LabeledMatrix& train) {
  KnnParams p;
  p.standardization = Standardization::fit(train);
  for (const auto& r : train.rows) {
    p.points.push_back(p.standardization.apply(r.features));
    p.labels.push_back(r.label);
  }
  return p;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

TreeParams fit_tree(const TreeSpec& spec, const LabeledMatrix& train) {
  const detail::FeatureMatrix x(train);
  const auto y = labels_of(train);
  const std::vector<double> w(train.rows.size(), 1.0);
  detail::GiniTreeOptions opt{spec.max_depth, spec.min_leaf, 0};
  return {detail::grow_gini_tree(x, y, w, all_rows(x.rows), opt, nullptr)};
}

ForestParams fit_forest(const ForestSpec& spec, const LabeledMatrix& train, std::uint64_t seed, int jobs) {
  const detail::FeatureMatrix x(train);
  const auto y = labels_of(train);
  const std::vector<double> w(train.rows.size(), 1.0);
  const std::size_t m = x.cols;
  std::size_t mtry = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
  if (spec.feature_subsample) {
    mtry = static_cast<std::size_t>(std::ceil(*spec.feature_subsample * static_cast<double>(m) - 1e-9));
  }
  mtry = std::clamp<std::size_t>(mtry, 1, m);
  detail::GiniTreeOptions opt{spec.max_depth, spec.min_leaf, mtry};

  ForestParams p;
  p.trees.resize(static_cast<std::size_t>(spec.n_trees));
  const std::uint64_t forest_seed = mix_seed(seed, spec.seed);
  parallel_for(p.trees.size(), jobs, [&](std::size_t t) {
    Rng rng(mix_seed(forest_seed, t));
    std::vector<std::size_t> sample;
    if (spec.bootstrap) {
      sample.resize(x.rows);
      for (auto& s : sample) s = rng.index(x.rows);
    } else {
      sample = all_rows(x.rows);
    }
    p.trees[t] = detail::grow_gini_tree(x, y, w, std::move(sample), opt, &rng);
  });
  return p;
}

AdaBoostParams fit_adaboost(const AdaBoostSpec& spec, const LabeledMatrix& train) {
  const detail::FeatureMatrix x(train);
  const auto y = labels_of(train);
  const std::size_t n = x.rows;
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  detail::GiniTreeOptions opt{1, 1, 0};

  AdaBoostParams p;
  p.fallback_probability = train.positive_rate();
  for (int round = 0; round < spec.n_rounds; ++round) {
    DecisionTree stump = detail::grow_gini_tree(x, y, w, all_rows(n), opt, nullptr);
    std::vector<char> wrong(n);
    double err = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int vote = stump.predict(x.row(i)) >= 0.5 ? 1 : 0;
      wrong[i] = vote != y[i];
      err += wrong[i] ? w[i] : 0.0;
      total += w[i];
    }
    err /= total;
    if (err >= 0.5) break;
    const double eps = std::max(err, 1e-10);
    const double alpha = spec.learning_rate * std::log((1.0 - eps) / eps);
    p.stumps.push_back(std::move(stump));
    p.alphas.push_back(alpha);
    if (err <= 0.0) break;
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (wrong[i]) w[i] *= std::exp(alpha);
      sum += w[i];
    }
    for (auto& wi : w) wi /= sum;
  }
  return p;
}

GbdtParams fit_gbdt(const GbdtSpec& spec, const LabeledMatrix& train) {
  const detail::FeatureMatrix x(train);
  const auto y = labels_of(train);
  const std::size_t n = x.rows;
  const double rate = std::clamp(train.positive_rate(), 1e-6, 1.0 - 1e-6);

  GbdtParams p;
  p.base_score = logit(rate);
  std::vector<double> margin(n, p.base_score);
  std::vector<double> grad(n), hess(n);
  detail::GradientTreeOptions opt{spec.max_depth, spec.min_leaf, spec.l2_lambda, spec.learning_rate};
  for (int round = 0; round < spec.n_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double prob = sigmoid(margin[i]);
      grad[i] = prob - y[i];
      hess[i] = prob * (1.0 - prob);
    }
    DecisionTree tree = detail::grow_gradient_tree(x, grad, hess, opt);
    for (std::size_t i = 0; i < n; ++i) margin[i] += tree.predict(x.row(i));
    p.trees.push_back(std::move(tree));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

double predict_knn(const KnnSpec& spec, const KnnParams& p, std::span<const double> x) {
  if (p.points.empty()) return 0.5;
  const auto z = p.standardization.apply(x);
  const std::size_t n = p.points.size();
  thread_local std::vector<double> dist;
  dist.resize(n);
  if (p.feature_major.size() == n * z.size()) {
    constexpr std::size_t kBlock = 8;
    const double* base = p.feature_major.data();
    std::size_t i = 0;
    for (; i + kBlock <= n; i += kBlock) {
      double acc[kBlock] = {};
      for (std::size_t j = 0; j < z.size(); ++j) {
        const double zj = z[j];
        const double* col = base + j * n + i;
        for (std::size_t b = 0; b < kBlock; ++b) {
          const double diff = zj - col[b];
          acc[b] += diff * diff;
        }
      }
      for (std::size_t b = 0; b < kBlock; ++b) dist[i + b] = acc[b];
    }
    for (; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < z.size(); ++j) {
        const double diff = z[j] - base[j * n + i];
        s += diff * diff;
      }
      dist[i] = s;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < z.size(); ++j) {
        const double diff = z[j] - p.points[i][j];
        s += diff * diff;
      }
      dist[i] = s;
    }
  }
  // Bounded max-heap of the k nearest (distance, index) pairs. Points are
  // visited in index order, so a later point must be strictly closer to enter.
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(spec.k), dist.size());
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(k);
  for (std::size_t i = 0; i < k; ++i) d.emplace_back(dist[i], i);
  std::make_heap(d.begin(), d.end());
  for (std::size_t i = k; i < dist.size(); ++i) {
    if (dist[i] >= d.front().first) continue;
    std::pop_heap(d.begin(), d.end());
    d.back() = {dist[i], i};
    std::push_heap(d.begin(), d.end());
  }
  std::sort_heap(d.begin(), d.end());
  if (!spec.distance_weighted) {
    double pos = 0;
    for (std::size_t i = 0; i < k; ++i) pos += p.labels[d[i].second];
    return pos / static_cast<double>(k);
  }
  // Exact matches take all the weight.
  if (d[0].first == 0.0) {
    double pos = 0, cnt = 0;
    for (std::size_t i = 0; i < k && d[i].first == 0.0; ++i) {
      pos += p.labels[d[i].second];
      cnt += 1;
    }
    return pos / cnt;
  }
  double pos = 0, total = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double w = 1.0 / std::sqrt(d[i].first);
    pos += w * p.labels[d[i].second];
    total += w;
  }
  return pos / total;
}

double predict_adaboost(const AdaBoostParams& p, std::span<const double> x) {
  double pos = 0, total = 0;
  for (std::size_t i = 0; i < p.stumps.size(); ++i) {
    total += p.alphas[i];
    if (p.stumps[i].predict(x) >= 0.5) pos += p.alphas[i];
  }
  if (total <= 0) return p.fallback_probability;
  return pos / total;
}

}  // namespace

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

std::string family_name(const ModelSpec& spec) {
  return std::visit(overloaded{[](const LogitSpec&) { return "logit"; },
                               [](const KnnSpec&) { return "knn"; },
                               [](const TreeSpec&) { return "tree"; },
                               [](const ForestSpec&) { return "random_forest"; },
                               [](const AdaBoostSpec&) { return "adaboost"; },
                               [](const GbdtSpec&) { return "gbdt"; }},
                    spec);
}

void validate_spec(const ModelSpec& spec) {
  std::visit(overloaded{
                 [](const LogitSpec& s) {
                   require(s.l2_lambda >= 0 && std::isfinite(s.l2_lambda), "logit l2_lambda >= 0");
                   require(s.max_iters >= 1, "logit max_iters >= 1");
                   require(s.tol > 0, "logit tol > 0");
                 },
                 [](const KnnSpec& s) { require(s.k >= 1, "knn k >= 1"); },
                 [](const TreeSpec& s) {
                   require(s.max_depth >= 0 && s.max_depth <= 64, "tree max_depth in [0, 64]");
                   require(s.min_leaf >= 1, "tree min_leaf >= 1");
                 },
                 [](const ForestSpec& s) {
                   require(s.n_trees >= 1, "forest n_trees >= 1");
                   require(s.max_depth >= 0 && s.max_depth <= 64, "forest max_depth in [0, 64]");
                   require(s.min_leaf >= 1, "forest min_leaf >= 1");
                   require(!s.feature_subsample ||
                               (*s.feature_subsample > 0 && *s.feature_subsample <= 1),
                           "forest feature_subsample in (0, 1]");
                 },
                 [](const AdaBoostSpec& s) {
                   require(s.n_rounds >= 1, "adaboost n_rounds >= 1");
                   require(s.learning_rate > 0, "adaboost learning_rate > 0");
                 },
                 [](const GbdtSpec& s) {
                   require(s.n_rounds >= 0, "gbdt n_rounds >= 0");
                   require(s.max_depth >= 0 && s.max_depth <= 32, "gbdt max_depth in [0, 32]");
                   require(s.learning_rate >= 0, "gbdt learning_rate >= 0");
                   require(s.l2_lambda >= 0, "gbdt l2_lambda >= 0");
                   require(s.min_leaf >= 1, "gbdt min_leaf >= 1");
                 }},
             spec);
}

json spec_to_json(const ModelSpec& spec) {
  json j = std::visit(
      overloaded{
          [](const LogitSpec& s) -> json {
            return {{"l2_lambda", s.l2_lambda}, {"max_iters", s.max_iters}, {"tol", s.tol}};
          },
          [](const KnnSpec& s) -> json { return {{"k", s.k}, {"distance_weighted", s.distance_weighted}}; },
          [](const TreeSpec& s) -> json { return {{"max_depth", s.max_depth}, {"min_leaf", s.min_leaf}}; },
          [](const ForestSpec& s) -> json {
            json f = {{"n_trees", s.n_trees}, {"max_depth", s.max_depth}, {"min_leaf", s.min_leaf},
                      {"seed", s.seed}, {"bootstrap", s.bootstrap}};
            f["feature_subsample"] = s.feature_subsample ? json(*s.feature_subsample) : json(nullptr);
            return f;
          },
          [](const AdaBoostSpec& s) -> json {
            return {{"n_rounds", s.n_rounds}, {"learning_rate", s.learning_rate}};
          },
          [](const GbdtSpec& s) -> json {
            return {{"n_rounds", s.n_rounds}, {"max_depth", s.max_depth}, {"learning_rate", s.learning_rate},
                    {"l2_lambda", s.l2_lambda}, {"min_leaf", s.min_leaf}};
          }},
      spec);
  j["family"] = family_name(spec);
  return j;
}

ModelSpec spec_from_json(const json& j) {
  try {
    const std::string family = j.at("family").get<std::string>();
    ModelSpec spec;
    if (family == "logit") {
      LogitSpec s;
      s.l2_lambda = j.value("l2_lambda", s.l2_lambda);
      s.max_iters = j.value("max_iters", s.max_iters);
      s.tol = j.value("tol", s.tol);
      spec = s;
    } else if (family == "knn") {
      KnnSpec s;
      s.k = j.value("k", s.k);
      s.distance_weighted = j.value("distance_weighted", s.distance_weighted);
      spec = s;
    } else if (family == "tree") {
      TreeSpec s;
      s.max_depth = j.value("max_depth", s.max_depth);
      s.min_leaf = j.value("min_leaf", s.min_leaf);
      spec = s;
    } else if (family == "random_forest") {
      ForestSpec s;
      s.n_trees = j.value("n_trees", s.n_trees);
      s.max_depth = j.value("max_depth", s.max_depth);
      s.min_leaf = j.value("min_leaf", s.min_leaf);
      s.seed = j.value("seed", s.seed);
      s.bootstrap = j.value("bootstrap", s.bootstrap);
      if (j.contains("feature_subsample") && !j["feature_subsample"].is_null()) {
        s.feature_subsample = j["feature_subsample"].get<double>();
      }
      spec = s;
    } else if (family == "adaboost") {
      AdaBoostSpec s;
      s.n_rounds = j.value("n_rounds", s.n_rounds);
      s.learning_rate = j.value("learning_rate", s.learning_rate);
      spec = s;
    } else if (family == "gbdt") {
      GbdtSpec s;
      s.n_rounds = j.value("n_rounds", s.n_rounds);
      s.max_depth = j.value("max_depth", s.max_depth);
      s.learning_rate = j.value("learning_rate", s.learning_rate);
      s.l2_lambda = j.value("l2_lambda", s.l2_lambda);
      s.min_leaf = j.value("min_leaf", s.min_leaf);
      spec = s;
    } else {
      throw InputError("unknown model family '" + family + "'");
    }
    validate_spec(spec);
    return spec;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

Standardization Standardization::fit(const LabeledMatrix& matrix) {
  const std::size_t m = matrix.width();
  const std::size_t n = matrix.rows.size();
  Standardization s;
  s.mean.assign(m, 0.0);
  s.scale.assign(m, 1.0);
  if (n == 0) return s;
  for (const auto& r : matrix.rows) {
    for (std::size_t j = 0; j < m; ++j) s.mean[j] += r.features[j];
  }
  for (auto& v : s.mean) v /= static_cast<double>(n);
  for (std::size_t j = 0; j < m; ++j) {
    double sq = 0;
    for (const auto& r : matrix.rows) sq += (r.features[j] - s.mean[j]) * (r.features[j] - s.mean[j]);
    const double sd = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

std::vector<double> Standardization::apply(std::span<const double> x) const {
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - mean[j]) / scale[j];
  return z;
}

std::vector<double> Standardization::invert(std::span<const double> z) const {
  std::vector<double> x(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) x[j] = mean[j] + scale[j] * z[j];
  return x;
}

double DecisionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

int DecisionTree::depth() const {
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

bool DecisionTree::uses_feature(int feature) const {
  return std::any_of(nodes.begin(), nodes.end(), [&](const TreeNode& n) { return n.feature == feature; });
}

TrainedModel::TrainedModel(ModelSpec spec, ModelParameters parameters, std::vector<std::string> feature_names)
    : spec_(std::move(spec)), parameters_(std::move(parameters)), feature_names_(std::move(feature_names)) {
  if (spec_.index() != parameters_.index()) {
    throw InvariantError("model spec and parameters belong to different families");
  }
  if (auto* kp = std::get_if<KnnParams>(&parameters_)) {
    const std::size_t n = kp->points.size();
    const std::size_t m = n == 0 ? 0 : kp->points[0].size();
    kp->feature_major.assign(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (kp->points[i].size() != m) throw InvariantError("knn points have inconsistent widths");
      for (std::size_t j = 0; j < m; ++j) kp->feature_major[j * n + i] = kp->points[i][j];
    }
  }
}

double TrainedModel::predict_native(std::span<const double> x) const {
  if (x.size() != feature_names_.size()) {
    throw InputError("feature vector has width " + std::to_string(x.size()) + ", model expects " +
                     std::to_string(feature_names_.size()));
  }
  return std::visit(
      overloaded{
          [&](const LogitParams& p) {
            const auto z = p.standardization.apply(x);
            double eta = p.intercept;
            for (std::size_t j = 0; j < z.size(); ++j) eta += p.weights[j] * z[j];
            return sigmoid(eta);
          },
          [&](const KnnParams& p) { return predict_knn(std::get<KnnSpec>(spec_), p, x); },
          [&](const TreeParams& p) { return p.tree.predict(x); },
          [&](const ForestParams& p) {
            double s = 0;
            for (const auto& t : p.trees) s += t.predict(x);
            return p.trees.empty() ? 0.5 : s / static_cast<double>(p.trees.size());
          },
          [&](const AdaBoostParams& p) { return predict_adaboost(p, x); },
          [&](const GbdtParams& p) {
            double margin = p.base_score;
            for (const auto& t : p.trees) margin += t.predict(x);
            return margin;
          }},
      parameters_);
}

double TrainedModel::predict_proba(std::span<const double> x) const {
  const double v = predict_native(x);
  return native_is_log_odds() ? sigmoid(v) : v;
}

json TrainedModel::to_json() const {
  json params = std::visit(
      overloaded{
          [](const LogitParams& p) -> json { return {{"weights", p.weights}, {"intercept", p.intercept}}; },
          [](const KnnParams& p) -> json { return {{"points", p.points}, {"labels", p.labels}}; },
          [](const TreeParams& p) -> json { return {{"tree", tree_to_json(p.tree)}}; },
          [](const ForestParams& p) -> json { return {{"trees", trees_to_json(p.trees)}}; },
          [](const AdaBoostParams& p) -> json {
            return {{"stumps", trees_to_json(p.stumps)}, {"alphas", p.alphas},
                    {"fallback_probability", p.fallback_probability}};
          },
          [](const GbdtParams& p) -> json {
            return {{"base_score", p.base_score}, {"trees", trees_to_json(p.trees)}};
          }},
      parameters_);
  const Standardization* st = nullptr;
  if (auto* lp = std::get_if<LogitParams>(&parameters_)) st = &lp->standardization;
  if (auto* kp = std::get_if<KnnParams>(&parameters_)) st = &kp->standardization;
  return {{"schema_version", kModelSchemaVersion},
          {"spec", spec_to_json(spec_)},
          {"parameters", params},
          {"feature_names", feature_names_},
          {"standardization", st ? standardization_to_json(*st) : json(nullptr)}};
}

TrainedModel TrainedModel::from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kModelSchemaVersion) {
      throw InputError("unsupported model schema_version " + j.at("schema_version").dump());
    }
    ModelSpec spec = spec_from_json(j.at("spec"));
    const json& p = j.at("parameters");
    auto names = j.at("feature_names").get<std::vector<std::string>>();
    const Standardization st = standardization_from_json(j.at("standardization"));
    ModelParameters params = std::visit(
        overloaded{
            [&](const LogitSpec&) -> ModelParameters {
              LogitParams lp;
              lp.standardization = st;
              lp.weights = p.at("weights").get<std::vector<double>>();
              lp.intercept = p.at("intercept").get<double>();
              return lp;
            },
            [&](const KnnSpec&) -> ModelParameters {
              KnnParams kp;
              kp.standardization = st;
              kp.points = p.at("points").get<std::vector<std::vector<double>>>();
              kp.labels = p.at("labels").get<std::vector<int>>();
              return kp;
            },
            [&](const TreeSpec&) -> ModelParameters { return TreeParams{tree_from_json(p.at("tree"))}; },
            [&](const ForestSpec&) -> ModelParameters { return ForestParams{trees_from_json(p.at("trees"))}; },
            [&](const AdaBoostSpec&) -> ModelParameters {
              AdaBoostParams ap;
              ap.stumps = trees_from_json(p.at("stumps"));
              ap.alphas = p.at("alphas").get<std::vector<double>>();
              ap.fallback_probability = p.at("fallback_probability").get<double>();
              return ap;
            },
            [&](const GbdtSpec&) -> ModelParameters {
              GbdtParams gp;
              gp.base_score = p.at("base_score").get<double>();
              gp.trees = trees_from_json(p.at("trees"));
              return gp;
            }},
        spec);
    return TrainedModel(std::move(spec), std::move(params), std::move(names));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model document: ") + e.what());
  }
}

TrainedModel TrainedModel::deserialize(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("model file is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

TrainedModel fit_classifier(const ModelSpec& spec, const LabeledMatrix& train, std::uint64_t seed, int jobs) {
  validate_spec(spec);
  train.validate();
  if (train.rows.size() < 2) throw DataError("need at least 2 training rows");
  if (!std::holds_alternative<KnnSpec>(spec) && !train.has_both_classes()) {
    throw DataError(family_name(spec) + " needs both classes in the training data");
  }
  ModelParameters params = std::visit(
      overloaded{[&](const LogitSpec& s) -> ModelParameters { return fit_logit(s, train); },
                 [&](const KnnSpec&) -> ModelParameters { return fit_knn(train); },
                 [&](const TreeSpec& s) -> ModelParameters { return fit_tree(s, train); },
                 [&](const ForestSpec& s) -> ModelParameters { return fit_forest(s, train, seed, jobs); },
                 [&](const AdaBoostSpec& s) -> ModelParameters { return fit_adaboost(s, train); },
                 [&](const GbdtSpec& s) -> ModelParameters { return fit_gbdt(s, train); }},
      spec);
  return TrainedModel(spec, std::move(params), train.feature_names);
}

std::vector<double> predict_all(const TrainedModel& model, const LabeledMatrix& matrix) {
  std::vector<double> out;
  out.reserve(matrix.rows.size());
  for (const auto& r : matrix.rows) out.push_back(model.predict_proba(r.features));
  return out;
}

}  // namespace loadshift
