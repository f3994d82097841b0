#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "loadshift/explainers.hpp"
#include "loadshift/features.hpp"
#include "loadshift/ingest.hpp"
#include "loadshift/learners.hpp"

namespace loadshift {

using DayProbabilities = std::array<double, kHoursPerDay>;

// ---------------------------------------------------------------------------
// Load agent
// ---------------------------------------------------------------------------

struct TypicalLoadProfile {
  std::size_t device_id = 0;
  int duration_hours = 0;
  std::vector<double> hourly_load;  // mean watts per run hour
  std::size_t cycles_observed = 0;
};

/// Maximal runs of consecutive hours with load >= active_watts, restricted
/// to rows with from <= time < to.
std::vector<std::vector<double>> extract_cycles(const HourlyTable& table, std::size_t device, double active_watts,
                                                Timestamp from, Timestamp to);

/// Duration = lower median cycle length; hour i = mean of the i-th hour over
/// all cycles, shorter cycles contributing 0. Throws DataError with no cycles.
TypicalLoadProfile profile_from_cycles(std::size_t device, const std::vector<std::vector<double>>& cycles);

TypicalLoadProfile load_agent_profile(const HourlyTable& table, std::size_t device, double active_watts,
                                      Timestamp history_end);

// ---------------------------------------------------------------------------
// Availability and usage agents
// ---------------------------------------------------------------------------

/// Probability for each hour of `date` (UTC midnight).
DayProbabilities availability_agent_predict(const ModelFunction& model, const HourlyTable& table,
                                            std::span<const int> labels, Timestamp date);

struct UsageModelBinding {
  std::size_t device = 0;
  ModelFunction model;
  std::span<const DailyLabel> labels;
};

/// Usage probability of each bound device on `date`, in binding order.
std::vector<double> usage_agent_predict(const std::vector<UsageModelBinding>& models, const HourlyTable& table,
                                        Timestamp date);

// ---------------------------------------------------------------------------
// Recommendation agent
// ---------------------------------------------------------------------------

struct DayPrediction {
  Timestamp date = 0;
  DayProbabilities availability{};
  std::vector<std::size_t> devices;
  std::vector<double> usage;  // parallel to devices
};

struct Thresholds {
  double usage = 0.5;
  double availability = 0.5;
  /// Require every run hour (not just the start) to be available.
  bool strict_availability = false;
  /// Rank start hours by summed price instead of profile-weighted cost.
  bool price_only = false;
};

enum class RecommendationStatus { Recommended, LowUsage, NoAvailableHour };

std::string_view to_string(RecommendationStatus s);

struct RankedFeature {
  std::size_t index = 0;
  std::string name;
  double phi = 0.0;
  FeatureGroup group = FeatureGroup::NonWeather;
};

struct ExplanationPart {
  Attribution attribution;
  std::vector<double> instance;
  std::vector<RankedFeature> non_weather;  // top by |phi|, at most 2
  std::vector<RankedFeature> weather;
  std::string text;
};

struct Recommendation {
  std::size_t device = 0;
  std::string device_name;
  RecommendationStatus status = RecommendationStatus::LowUsage;
  int start_hour = -1;
  double estimated_cost = 0.0;
  double usage_prob = 0.0;
  double availability_prob_at_start = 0.0;
  std::optional<ExplanationPart> usage_explanation;
  std::optional<ExplanationPart> availability_explanation;

  bool recommended() const { return status == RecommendationStatus::Recommended; }
};

/// cost(h) = sum_i price[h+i] * load[i] / 1000 (or sum_i price[h+i] in price-only mode).
double run_cost(std::span<const double> prices, const TypicalLoadProfile& profile, int start_hour, bool price_only);

/// Cheapest admissible start per device; ties go to the earliest hour.
/// Throws InputError without 24 prices, or DataError when a device passing
/// the usage gate has no profile.
std::vector<Recommendation> recommend(const DayPrediction& prediction, const std::vector<TypicalLoadProfile>& profiles,
                                      std::span<const double> prices_24h, const Thresholds& thresholds,
                                      const std::vector<std::string>& device_names = {});

/// Indices of the `k` largest |phi| in `group`, earlier index first on ties.
std::vector<std::size_t> top_features(std::span<const double> phi, std::span<const FeatureGroup> groups,
                                      FeatureGroup group, std::size_t k = 2);

ExplanationPart usage_explanation(const std::string& device_name, const Attribution& attribution,
                                  std::span<const double> instance, std::span<const FeatureGroup> groups);

ExplanationPart availability_explanation(int hour, const Attribution& attribution, std::span<const double> instance,
                                         std::span<const FeatureGroup> groups);

/// Attaches both explanation parts to a recommended item.
void explain_recommendation(Recommendation& rec, const Attribution& usage_attr, std::span<const double> usage_instance,
                            std::span<const FeatureGroup> usage_groups, const Attribution& availability_attr,
                            std::span<const double> availability_instance,
                            std::span<const FeatureGroup> availability_groups);

/// Horizontal bar chart of the six largest |phi|. Byte-identical output for identical input.
std::string attribution_svg(const Attribution& attribution, const std::string& title);

// ---------------------------------------------------------------------------
// Daily pipeline
// ---------------------------------------------------------------------------

struct AgentModel {
  TrainedModel model;
  BackgroundSet background;
  Standardization stats;  // training-set stats, used by LIME
};

struct DeviceState {
  std::size_t device = 0;
  std::string name;
  std::vector<DailyLabel> labels;
  AgentModel usage;
};

struct HouseholdState {
  HourlyTable table;
  AvailabilityLabels availability_labels;
  AgentModel availability;
  std::vector<DeviceState> devices;  // shiftable devices
};

struct PipelineConfig {
  Thresholds thresholds;
  double active_watts = 20.0;
  /// Tree SHAP falls back to Kernel SHAP for models without trees.
  ExplainerMethod method = ExplainerMethod::TreeShap;
  ExplainerSettings explainer;
  int daily_run_hour = 7;
};

class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& message)
      : std::runtime_error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct DailyResult {
  Timestamp date = 0;
  std::array<double, kHoursPerDay> prices{};
  DayPrediction prediction;
  std::vector<TypicalLoadProfile> profiles;
  std::vector<Recommendation> items;
  /// File name -> content for every explanation text and SVG chart.
  std::map<std::string, std::string> artifacts;
};

/// Price -> Availability -> Usage -> Load -> Recommendation -> Explainability.
/// Any stage failure aborts the day with a PipelineError naming the stage.
DailyResult run_daily_pipeline(const HouseholdState& state, Timestamp date, const PipelineConfig& config);

/// The 24 prices of `date` from the table; throws DataError if any hour is missing.
std::array<double, kHoursPerDay> day_prices(const HourlyTable& table, Timestamp date);

nlohmann::json recommendation_json(const DailyResult& result, const std::string& household, int daily_run_hour);

/// Lowercase, spaces and punctuation replaced by '_'.
std::string slugify(const std::string& name);

}  // namespace loadshift
