#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "loadshift/features.hpp"
#include "loadshift/learners.hpp"

namespace loadshift {

enum class OutputSpace { Probability, LogOdds };

std::string_view to_string(OutputSpace s);

/// Local additive explanation of one prediction.
struct Attribution {
  double base_value = 0.0;
  std::vector<double> contributions;
  OutputSpace output_space = OutputSpace::Probability;
  std::vector<std::string> feature_names;

  /// base_value + sum of contributions, in output_space.
  double surrogate_output() const;
  /// surrogate_output() mapped to probability space.
  double surrogate_probability() const;
};

/// Black-box scoring function. Explainers only see models through this.
using ModelFunction = std::function<double(std::span<const double>)>;

/// Both wrappers hold a reference; the model must outlive the function.
ModelFunction probability_function(const TrainedModel& model);
/// Log-odds for Gbdt, probability otherwise.
ModelFunction native_function(const TrainedModel& model);

/// Reference rows standing in for "feature absent".
struct BackgroundSet {
  std::vector<std::vector<double>> rows;
  std::uint64_t seed = 0;
};

/// `size` training rows drawn without replacement (all rows if fewer).
BackgroundSet sample_background(const LabeledMatrix& train, std::size_t size, std::uint64_t seed);

/// Interventional coalition value: mean over background rows of f with the
/// features in `coalition` (bit j = feature j) taken from the instance.
double coalition_value(const ModelFunction& f, std::span<const double> instance,
                       const BackgroundSet& background, std::uint64_t coalition);

inline constexpr std::size_t kKernelShapExactLimit = 12;
inline constexpr std::size_t kShapleyOracleLimit = 15;

/// Kernel SHAP. With M <= 12 features every coalition is enumerated, which
/// makes the weighted least-squares solution the exact Shapley values;
/// otherwise `n_samples` coalitions are drawn proportional to the Shapley
/// kernel. The efficiency constraint is imposed by eliminating the last
/// feature, so base + sum(phi) = f(instance) up to rounding.
Attribution kernel_shap(const ModelFunction& f, std::span<const double> instance,
                        const BackgroundSet& background, std::size_t n_samples, std::uint64_t seed,
                        std::vector<std::string> feature_names = {});

/// Exact interventional Shapley values for Tree, RandomForest, AdaBoost and
/// Gbdt models. Output space is log-odds for Gbdt and probability otherwise.
/// Throws InputError for Logit and KNN.
Attribution tree_shap_interventional(const TrainedModel& model, std::span<const double> instance,
                                     const BackgroundSet& background);

/// Brute-force Shapley values over all 2^M coalitions using the same
/// interventional value function as kernel_shap. M must be <= 15.
Attribution exact_shapley_oracle(const ModelFunction& f, std::span<const double> instance,
                                 const BackgroundSet& background,
                                 std::vector<std::string> feature_names = {});

struct LimeOptions {
  std::size_t n_perturbations = 1000;
  std::optional<double> kernel_width;  // default 0.75 * sqrt(M)
  double l2_penalty = 1e-3;
  std::uint64_t seed = 0;
};

/// Weighted ridge surrogate fitted around one instance in standardized space.
struct LimeResult {
  Attribution attribution;  // contributions = coefficient * standardized instance value
  double intercept = 0.0;
  std::vector<double> coefficients;
  Standardization stats;

  /// Surrogate prediction at an arbitrary point in raw feature space.
  double predict(std::span<const double> x) const;
};

LimeResult lime_explain(const ModelFunction& f, std::span<const double> instance,
                        const Standardization& train_stats, const LimeOptions& options,
                        std::vector<std::string> feature_names = {});

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum class ExplainerMethod { KernelShap, TreeShap, Lime };

std::string_view to_string(ExplainerMethod m);
ExplainerMethod explainer_method_from_string(std::string_view s);
/// TreeShap only handles tree ensembles; the others accept any model.
bool method_supports(ExplainerMethod method, const TrainedModel& model);

struct ExplainerSettings {
  std::size_t kernel_samples = 2048;  // only used above the exact-enumeration limit
  LimeOptions lime;
  std::uint64_t seed = 0;
};

using Explainer = std::function<Attribution(std::span<const double>)>;

/// Binds a method to a model. LIME seeds are derived from the settings seed
/// and the instance bytes, so each instance gets a reproducible sample.
Explainer make_explainer(ExplainerMethod method, const TrainedModel& model, const BackgroundSet& background,
                         const Standardization& train_stats, const ExplainerSettings& settings);

struct EvalInstance {
  std::vector<double> features;
  int label = 0;
};

struct ExplainerReport {
  double accuracy = 0.0;
  double fidelity = 0.0;
  double maee = 0.0;
  double duration_seconds = 0.0;  // mean wall-clock time to explain one day
  std::size_t instances = 0;
  std::size_t days = 0;
};

/// Class decisions compare against the cutoff with a 1e-12 allowance so
/// that rounding in base + sum(phi) cannot flip a prediction sitting exactly
/// on the cutoff.
inline constexpr double kDecisionTolerance = 1e-12;
inline bool classify(double probability, double cutoff) {
  return probability >= cutoff - kDecisionTolerance;
}

/// Explains every instance, day by day, and compares the surrogate
/// g = base + sum(phi) (sigmoid-mapped for log-odds) to the model f:
/// accuracy = agreement of g's class with labels, fidelity = agreement of
/// g's class with f's class, maee = mean |g - f|.
ExplainerReport evaluate_explainer(const Explainer& explainer, const TrainedModel& model,
                                   const std::vector<std::vector<EvalInstance>>& instances_by_day,
                                   double cutoff = 0.5);

nlohmann::json attribution_json(const Attribution& attribution, std::span<const double> instance,
                                std::span<const FeatureGroup> groups);
nlohmann::json explainer_report_json(const ExplainerReport& report);

}  // namespace loadshift
