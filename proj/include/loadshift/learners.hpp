#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "loadshift/core.hpp"
#include "loadshift/features.hpp"

namespace loadshift {

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// L2-regularized logistic regression fitted by full-batch gradient descent
/// on internally standardized features.
struct LogitSpec {
  double l2_lambda = 1e-3;
  int max_iters = 500;
  double tol = 1e-6;  // on the gradient norm
  friend bool operator==(const LogitSpec&, const LogitSpec&) = default;
};

struct KnnSpec {
  int k = 15;
  bool distance_weighted = false;
  friend bool operator==(const KnnSpec&, const KnnSpec&) = default;
};

/// CART with Gini impurity.
struct TreeSpec {
  int max_depth = 6;
  int min_leaf = 5;
  friend bool operator==(const TreeSpec&, const TreeSpec&) = default;
};

struct ForestSpec {
  int n_trees = 100;
  int max_depth = 8;
  int min_leaf = 5;
  /// Fraction of features tried per split; unset = ceil(sqrt(M)) features.
  std::optional<double> feature_subsample;
  std::uint64_t seed = 0;
  bool bootstrap = true;
  friend bool operator==(const ForestSpec&, const ForestSpec&) = default;
};

/// Discrete SAMME over depth-1 stumps.
struct AdaBoostSpec {
  int n_rounds = 50;
  double learning_rate = 1.0;
  friend bool operator==(const AdaBoostSpec&, const AdaBoostSpec&) = default;
};

/// Second-order gradient boosting with logistic loss.
struct GbdtSpec {
  int n_rounds = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  double l2_lambda = 1.0;
  int min_leaf = 5;
  friend bool operator==(const GbdtSpec&, const GbdtSpec&) = default;
};

using ModelSpec = std::variant<LogitSpec, KnnSpec, TreeSpec, ForestSpec, AdaBoostSpec, GbdtSpec>;

/// "logit", "knn", "tree", "random_forest", "adaboost", "gbdt".
std::string family_name(const ModelSpec& spec);
/// Throws InputError when a hyperparameter is out of range.
void validate_spec(const ModelSpec& spec);
nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Fitted parameters
// ---------------------------------------------------------------------------

/// Per-feature (x - mean) / scale; scale is 1 for constant features.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardization fit(const LabeledMatrix& matrix);
  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> invert(std::span<const double> z) const;
  bool empty() const { return mean.empty(); }
};

/// Flat node array; feature < 0 marks a leaf. x[feature] <= threshold goes left.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  int depth() const;
  bool uses_feature(int feature) const;
};

struct LogitParams {
  Standardization standardization;
  std::vector<double> weights;  // standardized space
  double intercept = 0.0;
};

struct KnnParams {
  Standardization standardization;
  std::vector<std::vector<double>> points;  // standardized
  std::vector<int> labels;
  /// Feature-major copy of `points`; rebuilt by TrainedModel, not serialized.
  std::vector<double> feature_major;
};

struct TreeParams {
  DecisionTree tree;  // leaf value = positive fraction
};

struct ForestParams {
  std::vector<DecisionTree> trees;
};

struct AdaBoostParams {
  std::vector<DecisionTree> stumps;  // a stump votes 1 when its leaf value >= 0.5
  std::vector<double> alphas;
  double fallback_probability = 0.5;  // used when no round was accepted
};

struct GbdtParams {
  double base_score = 0.0;           // log-odds
  std::vector<DecisionTree> trees;   // leaf values already multiplied by the learning rate
};

using ModelParameters =
    std::variant<LogitParams, KnnParams, TreeParams, ForestParams, AdaBoostParams, GbdtParams>;

class TrainedModel {
 public:
  TrainedModel(ModelSpec spec, ModelParameters parameters, std::vector<std::string> feature_names);

  /// Probability of the positive class, in [0, 1]. Throws InputError on width mismatch.
  double predict_proba(std::span<const double> x) const;
  /// Log-odds for Gbdt, probability for every other family.
  double predict_native(std::span<const double> x) const;
  bool native_is_log_odds() const { return std::holds_alternative<GbdtParams>(parameters_); }

  const ModelSpec& spec() const { return spec_; }
  const ModelParameters& parameters() const { return parameters_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  std::size_t width() const { return feature_names_.size(); }
  std::string family() const { return family_name(spec_); }

  nlohmann::json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
  std::string serialize() const { return to_json().dump(); }
  static TrainedModel deserialize(const std::string& text);

 private:
  ModelSpec spec_;
  ModelParameters parameters_;
  std::vector<std::string> feature_names_;
};

inline constexpr int kModelSchemaVersion = 1;

/// Fits `spec` on `train`. Deterministic given (spec, train, seed).
/// Throws DataError on single-class input (except Knn) and InvariantError on
/// non-finite features.
TrainedModel fit_classifier(const ModelSpec& spec, const LabeledMatrix& train, std::uint64_t seed,
                            int jobs = 1);

std::vector<double> predict_all(const TrainedModel& model, const LabeledMatrix& matrix);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Mann-Whitney AUC with ties counted 1/2. Throws DataError on single-class labels.
double auc(std::span<const double> scores, std::span<const int> labels);

/// Mean squared watt error of `profile` against start-aligned cycles,
/// each truncated or zero-padded to the profile length.
double mse(std::span<const double> profile, const std::vector<std::vector<double>>& cycles);

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct TuningEntry {
  ModelSpec spec;
  double validation_auc = 0.0;
};

struct TuningReport {
  std::vector<TuningEntry> entries;
  std::size_t chosen = 0;
  std::vector<std::string> feature_names;

  std::size_t count() const { return entries.size(); }
  const ModelSpec& chosen_spec() const { return entries.at(chosen).spec; }
  /// Index of the best entry of `family`, first on ties; nullopt if absent.
  std::optional<std::size_t> best_of_family(const std::string& family) const;
};

/// Fits every spec on `train` and scores it by AUC on `validation`.
/// The chosen spec has maximal AUC; ties go to the earliest entry.
TuningReport grid_search(const std::vector<ModelSpec>& grid, const LabeledMatrix& train,
                         const LabeledMatrix& validation, std::uint64_t seed, int jobs = 1);

/// The shipped 87-combination grid over logit, knn, random_forest, adaboost and gbdt.
std::vector<ModelSpec> default_grid();

std::vector<ModelSpec> grid_from_json(const nlohmann::json& j);
nlohmann::json tuning_report_json(const TuningReport& report);

}  // namespace loadshift
