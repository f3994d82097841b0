#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "loadshift/core.hpp"
#include "loadshift/ingest.hpp"

namespace loadshift {

enum class FeatureGroup { Weather, NonWeather };

std::string_view to_string(FeatureGroup g);

struct LabeledRow {
  std::vector<double> features;
  int label = 0;
  Timestamp time = 0;
};

/// Time-ordered design matrix with per-feature group tags.
struct LabeledMatrix {
  std::vector<std::string> feature_names;
  std::vector<FeatureGroup> groups;
  std::vector<LabeledRow> rows;

  std::size_t width() const { return feature_names.size(); }
  std::size_t size() const { return rows.size(); }
  bool has_both_classes() const;
  double positive_rate() const;
  /// Throws InvariantError if widths, tags or labels are inconsistent.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Default: threshold = Q25 + 0.25·(Q75 − Q25) of hourly aggregate load
/// (linear-interpolated quantiles). An absolute threshold overrides it.
struct AvailabilityPolicy {
  std::optional<double> absolute_threshold;
  double iqr_fraction = 0.25;
};

struct AvailabilityLabels {
  double threshold = 0.0;
  std::vector<int> labels;  // one per table row
};

/// label = 1 iff aggregate_load >= threshold.
/// Throws DataError when the quantile policy degenerates (Q25 == Q75).
AvailabilityLabels label_availability(const HourlyTable& table, const AvailabilityPolicy& policy);

/// Linear-interpolated sample quantile, q in [0,1]; `values` need not be sorted.
double quantile(std::vector<double> values, double q);

struct DailyLabel {
  Timestamp day = 0;  // UTC midnight
  int label = 0;
};

/// One label per complete (24-row) UTC day: 1 iff some hour has
/// device load >= active_watts.
std::vector<DailyLabel> label_usage(const HourlyTable& table, std::size_t device,
                                    double active_watts = 20.0);

// ---------------------------------------------------------------------------
// Feature vectors
// ---------------------------------------------------------------------------

inline constexpr std::size_t kAvailabilityFeatureCount = 12;
inline constexpr std::size_t kUsageFeatureCount = 12;
inline constexpr std::size_t kMinHistoryDays = 8;

const std::vector<std::string>& availability_feature_names();
const std::vector<FeatureGroup>& availability_feature_groups();
const std::vector<std::string>& usage_feature_names();
const std::vector<FeatureGroup>& usage_feature_groups();

/// Human-readable label for a feature key, used in explanation sentences.
std::string feature_display_name(std::string_view key);

/// Group of a known feature key; unknown keys count as non-weather.
FeatureGroup feature_group_of(std::string_view key);

/// [hour_sin, hour_cos, day_of_week, is_weekend, available_lag_24h,
///  available_lag_168h, available_rate_7d, temperature, dew_point,
///  rel_humidity, wind_dir, wind_speed]. Labels may be shorter than the
/// table; only hours strictly before target_hour are read.
std::vector<double> availability_features(const HourlyTable& table, std::span<const int> labels,
                                          Timestamp target_hour);

/// [day_of_week, is_weekend, month_sin, month_cos, used_yesterday,
///  use_count_7d, days_since_last_use (cap 30), daily means of the five
///  weather features]. Only labels of days before target_day are read.
std::vector<double> usage_features(const HourlyTable& table, std::span<const DailyLabel> usage_labels,
                                   Timestamp target_day);

/// Every table hour with enough history, in time order.
LabeledMatrix build_availability_matrix(const HourlyTable& table, const AvailabilityLabels& labels);

/// Every labelled day with enough history, in time order.
LabeledMatrix build_usage_matrix(const HourlyTable& table, std::span<const DailyLabel> usage_labels);

/// Removes all columns of `group`.
LabeledMatrix drop_group(const LabeledMatrix& matrix, FeatureGroup group);

struct SplitResult {
  LabeledMatrix train;
  LabeledMatrix test;
  Timestamp boundary = 0;  // first test timestamp
};

/// First ceil(fraction·N) rows train, the rest test; no shuffling.
SplitResult chronological_split(const LabeledMatrix& matrix, double train_fraction);

void write_matrix_csv(const LabeledMatrix& matrix, const std::filesystem::path& path);

}  // namespace loadshift
