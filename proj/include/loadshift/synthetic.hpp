#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "loadshift/ingest.hpp"

namespace loadshift {

/// Generator for REFIT-like households used by tests, demos and the
/// acceptance suite. Occupancy drives the aggregate load; device usage can
/// be tied to day-to-day weather anomalies.
struct SyntheticOptions {
  std::string household_id = "synthetic";
  Timestamp start = 1420070400;  // 2015-01-01T00:00Z
  int days = 150;
  std::uint64_t seed = 1;
  /// When false, every device is used with a fixed daily probability.
  bool weather_dependent_usage = true;
  double weather_usage_strength = 3.0;
  double base_usage_rate = 0.45;
  /// Fraction of weather cells blanked in the written weather file.
  double weather_missing_fraction = 0.0;
  int samples_per_hour = 6;
};

struct SyntheticDevice {
  std::string name;
  std::vector<double> cycle;  // watts per run hour
};

/// Washing machine, dishwasher, tumble dryer.
const std::vector<SyntheticDevice>& synthetic_devices();

struct SyntheticHousehold {
  HourlyTable table;                         // complete, priced
  std::vector<std::vector<int>> planted_use;  // [device][day]
  std::vector<int> occupied;                 // per hour
};

SyntheticHousehold generate_household(const SyntheticOptions& options);

struct SyntheticFiles {
  std::filesystem::path refit;
  std::filesystem::path weather;
  std::filesystem::path prices;
  std::size_t blanked_weather_cells = 0;
};

/// Writes `<dir>/household.csv` (REFIT layout, integer watts, sub-hourly
/// samples), `<dir>/weather.csv` and `<dir>/prices.csv`. Appliance1..3 are
/// the shiftable devices; Appliance4..9 carry a constant background draw.
SyntheticFiles write_synthetic_files(const SyntheticHousehold& household, const SyntheticOptions& options,
                                     const std::filesystem::path& dir);

}  // namespace loadshift
