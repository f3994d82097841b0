#include "loadshift/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "text_util.hpp"

namespace loadshift {

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kBackgroundAppliances = 6;
constexpr double kBackgroundWatts = 10.0;

double round_to(double v, double step) { return std::round(v / step) * step; }

// Per-day weather anomalies with weak persistence, independent of season.
struct DayWeather {
  double warm = 0;
  double dry = 0;
  double windy = 0;
};

double occupancy_probability(int hour, bool weekend, bool away) {
  if (away) return 0.08;
  if (hour == 23) return 0.4;
  if (weekend) return hour < 8 ? 0.05 : 0.85;
  if (hour < 6) return 0.05;
  if (hour < 9) return 0.85;
  if (hour < 17) return 0.12;
  return 0.9;
}

}  // namespace

const std::vector<SyntheticDevice>& synthetic_devices() {
  static const std::vector<SyntheticDevice> devices = {
      {"Washing Machine", {2000, 500}},
      {"Dishwasher", {1800, 1200, 300}},
      {"Tumble Dryer", {2400}},
  };
  return devices;
}

SyntheticHousehold generate_household(const SyntheticOptions& options) {
  if (options.days < 1) throw InputError("synthetic household needs at least one day");
  if (options.start != floor_day(options.start)) throw InputError("synthetic start must be UTC midnight");
  const auto& devices = synthetic_devices();
  const std::size_t n_dev = devices.size();
  const auto days = static_cast<std::size_t>(options.days);

  Rng weather_rng(mix_seed(options.seed, 1));
  Rng occupancy_rng(mix_seed(options.seed, 2));
  Rng usage_rng(mix_seed(options.seed, 3));
  Rng price_rng(mix_seed(options.seed, 4));
  Rng noise_rng(mix_seed(options.seed, 5));

  std::vector<DayWeather> anomalies(days);
  DayWeather prev;
  for (auto& a : anomalies) {
    a.warm = 0.3 * prev.warm + 0.95 * weather_rng.normal();
    a.dry = 0.3 * prev.dry + 0.95 * weather_rng.normal();
    a.windy = 0.3 * prev.windy + 0.95 * weather_rng.normal();
    prev = a;
  }

  SyntheticHousehold out;
  out.table.household_id = options.household_id;
  for (const auto& d : devices) out.table.device_names.push_back(d.name);
  out.planted_use.assign(n_dev, std::vector<int>(days, 0));

  const double base_logit = logit(options.base_usage_rate);
  for (std::size_t day = 0; day < days; ++day) {
    const Timestamp midnight = options.start + static_cast<Timestamp>(day) * kSecondsPerDay;
    const bool weekend = day_of_week(midnight) >= 5;
    const bool away = occupancy_rng.uniform() < 0.08;
    const DayWeather& a = anomalies[day];
    const double season = std::cos(kTwoPi * (static_cast<double>(day) + 15.0) / 365.0);
    const double day_level = 1.0 + 0.15 * (price_rng.uniform() - 0.5);

    std::vector<int> occupied(kHoursPerDay);
    for (int h = 0; h < kHoursPerDay; ++h) {
      occupied[static_cast<std::size_t>(h)] = occupancy_rng.uniform() < occupancy_probability(h, weekend, away);
    }

    std::vector<std::vector<double>> device_hours(n_dev, std::vector<double>(kHoursPerDay, 0.0));
    for (std::size_t k = 0; k < n_dev; ++k) {
      double z = base_logit;
      if (options.weather_dependent_usage) {
        const double signal = k == 0   ? 0.8 * a.dry - 0.5 * a.windy
                              : k == 1 ? 0.7 * a.warm + 0.5 * a.dry
                                       : -0.8 * a.dry - 0.4 * a.warm;
        z += options.weather_usage_strength * signal;
      }
      if (usage_rng.uniform() >= sigmoid(z)) continue;
      out.planted_use[k][day] = 1;
      const int d = static_cast<int>(devices[k].cycle.size());
      std::vector<int> starts;
      for (int h = 6; h + d <= kHoursPerDay; ++h) {
        if (occupied[static_cast<std::size_t>(h)]) starts.push_back(h);
      }
      if (starts.empty()) {
        for (int h = 8; h + d <= kHoursPerDay; ++h) starts.push_back(h);
      }
      const int start = starts[usage_rng.index(starts.size())];
      for (int i = 0; i < d; ++i) {
        const double jitter = 1.0 + 0.05 * (usage_rng.uniform() - 0.5);
        device_hours[k][static_cast<std::size_t>(start + i)] =
            std::round(devices[k].cycle[static_cast<std::size_t>(i)] * jitter);
      }
    }

    for (int h = 0; h < kHoursPerDay; ++h) {
      const auto hi = static_cast<std::size_t>(h);
      HourlyRow row;
      row.time = midnight + h * kSecondsPerHour;
      double aggregate = 120.0 + std::abs(30.0 * noise_rng.normal()) + kBackgroundAppliances * kBackgroundWatts;
      if (occupied[hi]) aggregate += 450.0 + std::abs(80.0 * noise_rng.normal());
      for (std::size_t k = 0; k < n_dev; ++k) {
        row.device_loads.push_back(device_hours[k][hi]);
        aggregate += device_hours[k][hi];
      }
      row.aggregate_load = std::round(aggregate);

      const double diurnal = std::sin(kTwoPi * (h - 9) / 24.0);
      const double temp = 10.0 + 8.0 * season + 3.0 * a.warm + 4.0 * diurnal + 0.5 * weather_rng.normal();
      const double spread = std::max(0.5, 5.0 + 2.5 * a.dry + 2.0 * diurnal + 0.3 * weather_rng.normal());
      row.weather[0] = round_to(temp, 0.1);
      row.weather[1] = round_to(temp - spread, 0.1);
      row.weather[2] = std::clamp(std::round(100.0 - 5.0 * spread), 5.0, 100.0);
      row.weather[3] = std::fmod(std::round(200.0 + 60.0 * a.windy + 20.0 * weather_rng.normal()) + 720.0, 360.0);
      row.weather[4] = round_to(std::max(0.0, 12.0 + 5.0 * a.windy + 2.0 * weather_rng.normal()), 0.1);

      const double peak = (h >= 17 && h <= 20) ? 0.08 : 0.0;
      const double night = (h < 6) ? -0.05 : 0.0;
      row.price = round_to(day_level * (0.22 + peak + night) + 0.01 * price_rng.uniform(), 0.0001);

      out.table.rows.push_back(std::move(row));
      out.occupied.push_back(occupied[hi]);
    }
  }
  return out;
}

SyntheticFiles write_synthetic_files(const SyntheticHousehold& household, const SyntheticOptions& options,
                                     const fs::path& dir) {
  using detail::format_double;
  if (options.samples_per_hour < 1) throw InputError("samples_per_hour must be >= 1");
  fs::create_directories(dir);
  SyntheticFiles files{dir / "household.csv", dir / "weather.csv", dir / "prices.csv", 0};
  const auto& table = household.table;

  {
    std::ofstream out(files.refit, std::ios::binary | std::ios::trunc);
    out << "Time,Unix,Aggregate";
    for (int i = 1; i <= 9; ++i) out << ",Appliance" << i;
    out << '\n';
    const Timestamp step = kSecondsPerHour / options.samples_per_hour;
    for (const auto& row : table.rows) {
      for (int s = 0; s < options.samples_per_hour; ++s) {
        const Timestamp t = row.time + s * step;
        out << format_iso_utc(t) << ',' << t << ',' << format_double(row.aggregate_load);
        for (double v : row.device_loads) out << ',' << format_double(v);
        for (std::size_t i = row.device_loads.size(); i < 9; ++i) out << ',' << format_double(kBackgroundWatts);
        out << '\n';
      }
    }
  }

  {
    Rng blank_rng(mix_seed(options.seed, 6));
    std::ofstream out(files.weather, std::ios::binary | std::ios::trunc);
    out << "time,temp,dwpt,rhum,wdir,wspd\n";
    for (const auto& row : table.rows) {
      out << format_iso_utc(row.time);
      for (double v : row.weather) {
        out << ',';
        if (blank_rng.uniform() < options.weather_missing_fraction) {
          ++files.blanked_weather_cells;
        } else {
          out << format_double(v);
        }
      }
      out << '\n';
    }
  }

  {
    std::ofstream out(files.prices, std::ios::binary | std::ios::trunc);
    out << "time,price_per_kwh\n";
    for (const auto& row : table.rows) {
      out << format_iso_utc(row.time) << ',' << format_double(row.price.value_or(0.0)) << '\n';
    }
  }
  return files;
}

}  // namespace loadshift
