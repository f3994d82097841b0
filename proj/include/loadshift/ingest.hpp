#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "loadshift/core.hpp"

namespace loadshift {

// ---------------------------------------------------------------------------
// Raw series
// ---------------------------------------------------------------------------

struct LoadSample {
  Timestamp time = 0;
  double watts = 0.0;
};

/// One appliance (or the aggregate meter) as read from disk.
/// Timestamps are strictly increasing; loads are finite and non-negative.
struct DeviceLoadSeries {
  int device_id = -1;  // -1 for the aggregate meter
  std::string device_name;
  std::vector<LoadSample> samples;
};

/// Maps CSV columns onto series. Defaults to the REFIT cleaned-data layout.
struct ColumnMap {
  std::string time_column = "Unix";
  std::string aggregate_column = "Aggregate";
  /// (CSV column, display name) per appliance, in device-index order.
  std::vector<std::pair<std::string, std::string>> appliances;

  static ColumnMap refit_default();
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t dropped_rows = 0;  // unparseable timestamp/loads or non-increasing time
};

struct HouseholdLoads {
  std::vector<DeviceLoadSeries> devices;
  DeviceLoadSeries aggregate;
  LoadReport report;
};

/// Reads a REFIT-format household CSV.
/// Throws InputError on a missing file, missing mapped column, or zero parseable rows.
HouseholdLoads load_household(const std::filesystem::path& path, const ColumnMap& columns);

/// Weather features in the fixed order used by every feature vector.
enum class WeatherFeature : std::size_t {
  Temperature = 0,
  DewPoint = 1,
  RelHumidity = 2,
  WindDir = 3,
  WindSpeed = 4,
};
inline constexpr std::size_t kWeatherFeatureCount = 5;
using WeatherValues = std::array<double, kWeatherFeatureCount>;  // NaN = missing

/// Canonical key per feature ("temperature", "dew_point", …).
std::string_view weather_feature_key(std::size_t feature);

struct WeatherSample {
  Timestamp time = 0;  // hour-aligned
  WeatherValues values{};
};

struct WeatherSeries {
  std::vector<WeatherSample> samples;
};

/// Reads a meteostat-style hourly CSV (`time,temp,dwpt,rhum,wdir,wspd`).
/// Empty cells are missing; rows with unparseable time are skipped.
WeatherSeries load_weather(const std::filesystem::path& path, std::size_t* dropped_rows = nullptr);

struct PriceSample {
  Timestamp time = 0;
  double price_per_kwh = 0.0;
};

struct PriceSeries {
  std::vector<PriceSample> samples;
};

/// Reads `time,price_per_kwh`. Prices must be finite and > 0.
PriceSeries load_prices(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Hourly alignment
// ---------------------------------------------------------------------------

/// Contiguous hourly series starting at `start`; NaN marks hours without samples.
struct HourlySeries {
  Timestamp start = 0;
  std::vector<double> values;

  Timestamp end() const {  // exclusive
    return start + static_cast<Timestamp>(values.size()) * kSecondsPerHour;
  }
};

/// Mean of the samples falling in each [h, h+1). Throws InputError on empty input.
HourlySeries resample_hourly(const DeviceLoadSeries& series);

struct HourlyRow {
  Timestamp time = 0;
  std::vector<double> device_loads;  // mean watts per device
  double aggregate_load = 0.0;
  WeatherValues weather{};
  std::optional<double> price;
  std::array<bool, kWeatherFeatureCount> imputed{};
};

struct HourlyTable {
  std::string household_id;
  std::vector<std::string> device_names;
  std::vector<HourlyRow> rows;

  bool empty() const { return rows.empty(); }
  Timestamp start() const { return rows.front().time; }
  /// Row index for an hour-aligned timestamp, or nullopt when outside the table.
  std::optional<std::size_t> index_of(Timestamp t) const;
  std::size_t missing_weather_cells() const;

  friend bool operator==(const HourlyTable&, const HourlyTable&);
};

struct JoinReport {
  std::size_t rows = 0;
  std::size_t missing_weather_cells = 0;
  std::size_t load_gap_hours = 0;  // hours with no load samples; filled with 0 W
  std::size_t hours_without_price = 0;
};

/// Aligns loads, weather and prices on the intersection of the load and
/// weather ranges. Throws DataError when the intersection is empty.
HourlyTable build_hourly_table(std::string household_id,
                               const std::vector<HourlySeries>& devices,
                               const std::vector<std::string>& device_names,
                               const HourlySeries& aggregate, const WeatherSeries& weather,
                               const PriceSeries& prices, JoinReport* report = nullptr);

struct ImputationOptions {
  std::size_t k = 5;
  bool standardize = true;
};

struct ImputationReport {
  std::array<std::size_t, kWeatherFeatureCount> imputed_per_feature{};
  std::size_t total() const;
};

/// Fills every missing weather cell with the mean of that feature over the
/// k nearest complete rows. Distance is Euclidean over the row's observed
/// weather features (standardized when requested) plus sin/cos hour of day;
/// ties go to the earlier row. Throws DataError with fewer than k complete rows.
HourlyTable knn_impute(const HourlyTable& table, const ImputationOptions& options,
                       ImputationReport* report = nullptr);

// ---------------------------------------------------------------------------
// Canonical on-disk forms
// ---------------------------------------------------------------------------

/// Writes the table as CSV. Doubles use shortest round-trip formatting so
/// read_hourly_csv(write_hourly_csv(t)) == t.
void write_hourly_csv(const HourlyTable& table, const std::filesystem::path& path);
HourlyTable read_hourly_csv(const std::filesystem::path& path, std::string household_id);

nlohmann::json imputation_report_json(const LoadReport& load, std::size_t weather_dropped,
                                      const JoinReport& join, const ImputationReport& imputation);

}  // namespace loadshift
