#include "loadshift/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "text_util.hpp"

namespace loadshift {

namespace {

constexpr std::size_t kDaysSinceCap = 30;
constexpr std::size_t kAvailabilityWeatherOffset = 7;
constexpr std::size_t kUsageWeatherOffset = 7;

std::vector<FeatureGroup> groups_with_weather_at(std::size_t offset, std::size_t width) {
  std::vector<FeatureGroup> g(width, FeatureGroup::NonWeather);
  for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) g[offset + f] = FeatureGroup::Weather;
  return g;
}

const DailyLabel* find_day(std::span<const DailyLabel> labels, Timestamp day) {
  auto it = std::lower_bound(labels.begin(), labels.end(), day,
                             [](const DailyLabel& l, Timestamp d) { return l.day < d; });
  return (it != labels.end() && it->day == day) ? &*it : nullptr;
}

}  // namespace

std::string_view to_string(FeatureGroup g) {
  return g == FeatureGroup::Weather ? "weather" : "non_weather";
}

bool LabeledMatrix::has_both_classes() const {
  bool pos = false, neg = false;
  for (const auto& r : rows) (r.label ? pos : neg) = true;
  return pos && neg;
}

double LabeledMatrix::positive_rate() const {
  if (rows.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) n += r.label ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(rows.size());
}

void LabeledMatrix::validate() const {
  if (groups.size() != feature_names.size()) {
    throw InvariantError("feature group tags do not cover every feature");
  }
  for (const auto& r : rows) {
    if (r.features.size() != feature_names.size()) throw InvariantError("row width mismatch");
    if (r.label != 0 && r.label != 1) throw InvariantError("non-binary label");
    for (double v : r.features) {
      if (!std::isfinite(v)) throw InvariantError("non-finite feature value");
    }
  }
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

AvailabilityLabels label_availability(const HourlyTable& table, const AvailabilityPolicy& policy) {
  AvailabilityLabels out;
  if (policy.absolute_threshold) {
    out.threshold = *policy.absolute_threshold;
  } else {
    std::vector<double> loads;
    loads.reserve(table.rows.size());
    for (const auto& r : table.rows) loads.push_back(r.aggregate_load);
    const double q25 = quantile(loads, 0.25);
    const double q75 = quantile(loads, 0.75);
    if (q25 == q75) {
      throw DataError("aggregate load quartiles coincide (" + detail::format_double(q25) +
                      " W); set an absolute availability threshold");
    }
    out.threshold = q25 + policy.iqr_fraction * (q75 - q25);
  }
  out.labels.reserve(table.rows.size());
  for (const auto& r : table.rows) out.labels.push_back(r.aggregate_load >= out.threshold ? 1 : 0);
  return out;
}

std::vector<DailyLabel> label_usage(const HourlyTable& table, std::size_t device, double active_watts) {
  if (device >= table.device_names.size()) {
    throw InputError("device index " + std::to_string(device) + " out of range");
  }
  if (!(active_watts > 0)) throw InputError("active_watts must be > 0");
  std::vector<DailyLabel> out;
  std::size_t i = 0;
  while (i < table.rows.size()) {
    const Timestamp day = floor_day(table.rows[i].time);
    std::size_t j = i;
    bool used = false;
    while (j < table.rows.size() && floor_day(table.rows[j].time) == day) {
      used = used || table.rows[j].device_loads[device] >= active_watts;
      ++j;
    }
    if (j - i == kHoursPerDay) out.push_back({day, used ? 1 : 0});
    i = j;
  }
  return out;
}

const std::vector<std::string>& availability_feature_names() {
  static const std::vector<std::string> names = {
      "hour_sin",          "hour_cos",     "day_of_week", "is_weekend",
      "available_lag_24h", "available_lag_168h", "available_rate_7d", "temperature",
      "dew_point",         "rel_humidity", "wind_dir",    "wind_speed"};
  return names;
}

const std::vector<FeatureGroup>& availability_feature_groups() {
  static const auto groups =
      groups_with_weather_at(kAvailabilityWeatherOffset, kAvailabilityFeatureCount);
  return groups;
}

const std::vector<std::string>& usage_feature_names() {
  static const std::vector<std::string> names = {
      "day_of_week",        "is_weekend",          "month_sin",          "month_cos",
      "used_yesterday",     "use_count_7d",        "days_since_last_use", "daily_temperature",
      "daily_dew_point",    "daily_rel_humidity",  "daily_wind_dir",     "daily_wind_speed"};
  return names;
}

const std::vector<FeatureGroup>& usage_feature_groups() {
  static const auto groups = groups_with_weather_at(kUsageWeatherOffset, kUsageFeatureCount);
  return groups;
}

std::string feature_display_name(std::string_view key) {
  static const std::map<std::string, std::string, std::less<>> names = {
      {"hour_sin", "the time of day (sine)"},
      {"hour_cos", "the time of day (cosine)"},
      {"day_of_week", "the day of the week"},
      {"is_weekend", "the weekend"},
      {"available_lag_24h", "your presence at this hour yesterday"},
      {"available_lag_168h", "your presence at this hour last week"},
      {"available_rate_7d", "your presence at this hour over the last week"},
      {"temperature", "air temperature"},
      {"dew_point", "dew point"},
      {"rel_humidity", "relative humidity"},
      {"wind_dir", "wind direction"},
      {"wind_speed", "wind speed"},
      {"month_sin", "the season (sine)"},
      {"month_cos", "the season (cosine)"},
      {"used_yesterday", "use of the device yesterday"},
      {"use_count_7d", "the number of uses last week"},
      {"days_since_last_use", "the days since the last use"},
      {"daily_temperature", "air temperature"},
      {"daily_dew_point", "dew point"},
      {"daily_rel_humidity", "relative humidity"},
      {"daily_wind_dir", "wind direction"},
      {"daily_wind_speed", "wind speed"},
  };
  if (auto it = names.find(key); it != names.end()) return it->second;
  return std::string(key);
}

FeatureGroup feature_group_of(std::string_view key) {
  for (const auto* names : {&availability_feature_names(), &usage_feature_names()}) {
    const auto& groups = names == &availability_feature_names() ? availability_feature_groups() : usage_feature_groups();
    for (std::size_t j = 0; j < names->size(); ++j) {
      if ((*names)[j] == key) return groups[j];
    }
  }
  return FeatureGroup::NonWeather;
}

std::vector<double> availability_features(const HourlyTable& table, std::span<const int> labels,
                                          Timestamp target_hour) {
  const auto idx = table.index_of(target_hour);
  if (!idx) throw DataError("target hour " + format_iso_utc(target_hour) + " is outside the table");
  const std::size_t i = *idx;
  if (i < kMinHistoryDays * kHoursPerDay) {
    throw DataError("insufficient history before " + format_iso_utc(target_hour));
  }
  if (labels.size() < i) throw DataError("availability labels do not cover the history window");

  const double angle = 2.0 * std::numbers::pi * hour_of_day(target_hour) / 24.0;
  const int dow = day_of_week(target_hour);
  double rate = 0;
  for (std::size_t k = 1; k <= 7; ++k) rate += labels[i - k * kHoursPerDay];
  rate /= 7.0;

  std::vector<double> v = {std::sin(angle),
                           std::cos(angle),
                           static_cast<double>(dow),
                           dow >= 5 ? 1.0 : 0.0,
                           static_cast<double>(labels[i - kHoursPerDay]),
                           static_cast<double>(labels[i - 7 * kHoursPerDay]),
                           rate};
  for (double w : table.rows[i].weather) {
    if (is_missing(w)) throw DataError("missing weather at " + format_iso_utc(target_hour));
    v.push_back(w);
  }
  return v;
}

std::vector<double> usage_features(const HourlyTable& table, std::span<const DailyLabel> usage_labels,
                                   Timestamp target_day) {
  if (target_day != floor_day(target_day)) throw InputError("target day must be UTC midnight");
  const auto first = table.index_of(target_day);
  const auto last = table.index_of(target_day + 23 * kSecondsPerHour);
  if (!first || !last) throw DataError("day " + format_date_utc(target_day) + " is not fully in the table");
  if (target_day - table.start() < static_cast<Timestamp>(kMinHistoryDays) * kSecondsPerDay) {
    throw DataError("insufficient history before " + format_date_utc(target_day));
  }

  auto label_of = [&](std::size_t days_back) -> const DailyLabel* {
    return find_day(usage_labels, target_day - static_cast<Timestamp>(days_back) * kSecondsPerDay);
  };
  double count = 0;
  for (std::size_t k = 1; k <= 7; ++k) {
    const DailyLabel* l = label_of(k);
    if (!l) throw DataError("usage labels do not cover the week before " + format_date_utc(target_day));
    count += l->label;
  }
  double since = static_cast<double>(kDaysSinceCap);
  for (std::size_t k = 1; k <= kDaysSinceCap; ++k) {
    const DailyLabel* l = label_of(k);
    if (!l) break;
    if (l->label) {
      since = static_cast<double>(k);
      break;
    }
  }

  const int dow = day_of_week(target_day);
  const double month_angle = 2.0 * std::numbers::pi * (month_of(target_day) - 1) / 12.0;
  std::vector<double> v = {static_cast<double>(dow),
                           dow >= 5 ? 1.0 : 0.0,
                           std::sin(month_angle),
                           std::cos(month_angle),
                           static_cast<double>(label_of(1)->label),
                           count,
                           since};
  for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) {
    double sum = 0;
    for (std::size_t r = *first; r <= *last; ++r) {
      const double w = table.rows[r].weather[f];
      if (is_missing(w)) throw DataError("missing weather on " + format_date_utc(target_day));
      sum += w;
    }
    v.push_back(sum / kHoursPerDay);
  }
  return v;
}

LabeledMatrix build_availability_matrix(const HourlyTable& table, const AvailabilityLabels& labels) {
  LabeledMatrix m;
  m.feature_names = availability_feature_names();
  m.groups = availability_feature_groups();
  for (std::size_t i = kMinHistoryDays * kHoursPerDay; i < table.rows.size(); ++i) {
    const Timestamp t = table.rows[i].time;
    m.rows.push_back({availability_features(table, labels.labels, t), labels.labels[i], t});
  }
  return m;
}

LabeledMatrix build_usage_matrix(const HourlyTable& table, std::span<const DailyLabel> usage_labels) {
  LabeledMatrix m;
  m.feature_names = usage_feature_names();
  m.groups = usage_feature_groups();
  if (table.empty()) return m;
  const Timestamp earliest = table.start() + static_cast<Timestamp>(kMinHistoryDays) * kSecondsPerDay;
  for (const auto& l : usage_labels) {
    if (l.day < earliest) continue;
    m.rows.push_back({usage_features(table, usage_labels, l.day), l.label, l.day});
  }
  return m;
}

LabeledMatrix drop_group(const LabeledMatrix& matrix, FeatureGroup group) {
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < matrix.width(); ++j) {
    if (matrix.groups[j] != group) keep.push_back(j);
  }
  LabeledMatrix out;
  for (std::size_t j : keep) {
    out.feature_names.push_back(matrix.feature_names[j]);
    out.groups.push_back(matrix.groups[j]);
  }
  out.rows.reserve(matrix.rows.size());
  for (const auto& r : matrix.rows) {
    LabeledRow nr;
    nr.label = r.label;
    nr.time = r.time;
    for (std::size_t j : keep) nr.features.push_back(r.features[j]);
    out.rows.push_back(std::move(nr));
  }
  return out;
}

SplitResult chronological_split(const LabeledMatrix& matrix, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InputError("train fraction must lie in (0, 1)");
  }
  for (std::size_t i = 1; i < matrix.rows.size(); ++i) {
    if (matrix.rows[i].time < matrix.rows[i - 1].time) throw InvariantError("matrix is not time-ordered");
  }
  const double n = static_cast<double>(matrix.rows.size());
  // Guard against 0.8*10 landing a hair above 8.
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * n - 1e-9));
  if (n_train == 0 || n_train >= matrix.rows.size()) {
    throw DataError("chronological split leaves an empty side (" + std::to_string(matrix.rows.size()) +
                    " rows)");
  }
  SplitResult out;
  out.train.feature_names = out.test.feature_names = matrix.feature_names;
  out.train.groups = out.test.groups = matrix.groups;
  out.train.rows.assign(matrix.rows.begin(), matrix.rows.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.rows.assign(matrix.rows.begin() + static_cast<std::ptrdiff_t>(n_train), matrix.rows.end());
  out.boundary = out.test.rows.front().time;
  return out;
}

void write_matrix_csv(const LabeledMatrix& matrix, const std::filesystem::path& path) {
  std::ostringstream os;
  for (const auto& n : matrix.feature_names) os << n << ',';
  os << "label,timestamp\n";
  for (const auto& r : matrix.rows) {
    for (double v : r.features) os << detail::format_double(v) << ',';
    os << r.label << ',' << r.time << '\n';
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  detail::write_text_file(path.string(), os.str());
}

}  // namespace loadshift
