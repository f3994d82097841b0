#include "loadshift/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "text_util.hpp"

namespace loadshift {

namespace fs = std::filesystem;
using detail::parse_double;
using detail::split_csv_line;

namespace {

std::ifstream open_or_throw(const fs::path& path, std::string_view what) {
  if (!fs::exists(path)) {
    throw InputError(std::string(what) + " file not found: " + path.string());
  }
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

std::map<std::string, std::size_t, std::less<>> header_index(const std::string& line) {
  std::map<std::string, std::size_t, std::less<>> idx;
  const auto cells = split_csv_line(line);
  for (std::size_t i = 0; i < cells.size(); ++i) idx.emplace(std::string(cells[i]), i);
  return idx;
}

std::size_t require_column(const std::map<std::string, std::size_t, std::less<>>& idx,
                           const std::string& name, const fs::path& path) {
  auto it = idx.find(name);
  if (it == idx.end()) {
    throw InputError("column '" + name + "' missing from " + path.string());
  }
  return it->second;
}

bool same_double(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

}  // namespace

ColumnMap ColumnMap::refit_default() {
  ColumnMap map;
  for (int i = 1; i <= 9; ++i) {
    const std::string col = "Appliance" + std::to_string(i);
    map.appliances.emplace_back(col, col);
  }
  return map;
}

HouseholdLoads load_household(const fs::path& path, const ColumnMap& columns) {
  std::ifstream in = open_or_throw(path, "household");
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty household file: " + path.string());
  const auto idx = header_index(line);

  const std::size_t time_col = require_column(idx, columns.time_column, path);
  const std::size_t agg_col = require_column(idx, columns.aggregate_column, path);
  std::vector<std::size_t> dev_cols;
  for (const auto& [col, name] : columns.appliances) {
    dev_cols.push_back(require_column(idx, col, path));
  }

  HouseholdLoads out;
  out.aggregate.device_id = -1;
  out.aggregate.device_name = "aggregate";
  for (std::size_t d = 0; d < columns.appliances.size(); ++d) {
    out.devices.push_back({static_cast<int>(d), columns.appliances[d].second, {}});
  }

  const std::size_t needed = std::max(time_col, std::max(agg_col, dev_cols.empty()
                                                                      ? std::size_t{0}
                                                                      : *std::max_element(dev_cols.begin(), dev_cols.end())));
  Timestamp last = std::numeric_limits<Timestamp>::min();
  std::vector<double> loads(dev_cols.size());
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++out.report.rows_read;
    const auto cells = split_csv_line(line);
    if (cells.size() <= needed) {
      ++out.report.dropped_rows;
      continue;
    }
    long long unix_time = 0;
    double ts_double = 0;
    bool ok = detail::parse_int64(cells[time_col], unix_time);
    if (!ok && parse_double(cells[time_col], ts_double) && std::isfinite(ts_double)) {
      unix_time = static_cast<long long>(std::floor(ts_double));
      ok = true;
    }
    double agg = 0;
    ok = ok && parse_double(cells[agg_col], agg) && std::isfinite(agg) && agg >= 0;
    for (std::size_t d = 0; ok && d < dev_cols.size(); ++d) {
      ok = parse_double(cells[dev_cols[d]], loads[d]) && std::isfinite(loads[d]) && loads[d] >= 0;
    }
    if (!ok || unix_time <= last) {
      ++out.report.dropped_rows;
      continue;
    }
    last = unix_time;
    out.aggregate.samples.push_back({unix_time, agg});
    for (std::size_t d = 0; d < dev_cols.size(); ++d) {
      out.devices[d].samples.push_back({unix_time, loads[d]});
    }
  }
  if (out.aggregate.samples.empty()) {
    throw InputError("no parseable rows in " + path.string());
  }
  return out;
}

std::string_view weather_feature_key(std::size_t feature) {
  static constexpr std::array<std::string_view, kWeatherFeatureCount> keys = {
      "temperature", "dew_point", "rel_humidity", "wind_dir", "wind_speed"};
  return keys.at(feature);
}

WeatherSeries load_weather(const fs::path& path, std::size_t* dropped_rows) {
  std::ifstream in = open_or_throw(path, "weather");
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty weather file: " + path.string());
  const auto idx = header_index(line);
  const std::size_t time_col = require_column(idx, "time", path);
  // Column order follows WeatherFeature.
  const std::array<std::size_t, kWeatherFeatureCount> cols = {
      require_column(idx, "temp", path), require_column(idx, "dwpt", path),
      require_column(idx, "rhum", path), require_column(idx, "wdir", path),
      require_column(idx, "wspd", path)};

  WeatherSeries out;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    Timestamp t = 0;
    if (cells.size() <= time_col || !parse_iso_utc(std::string(cells[time_col]), t) ||
        t != floor_hour(t) || (!out.samples.empty() && t <= out.samples.back().time)) {
      ++dropped;
      continue;
    }
    WeatherSample s;
    s.time = t;
    for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) {
      double v = kMissing;
      if (cols[f] < cells.size() && !cells[cols[f]].empty()) {
        if (!parse_double(cells[cols[f]], v) || !std::isfinite(v)) v = kMissing;
      }
      s.values[f] = v;
    }
    out.samples.push_back(s);
  }
  if (dropped_rows) *dropped_rows = dropped;
  return out;
}

PriceSeries load_prices(const fs::path& path) {
  std::ifstream in = open_or_throw(path, "price");
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty price file: " + path.string());
  const auto idx = header_index(line);
  const std::size_t time_col = require_column(idx, "time", path);
  const std::size_t price_col = require_column(idx, "price_per_kwh", path);

  PriceSeries out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    Timestamp t = 0;
    double p = 0;
    if (cells.size() <= std::max(time_col, price_col) ||
        !parse_iso_utc(std::string(cells[time_col]), t) || !parse_double(cells[price_col], p)) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": malformed price row");
    }
    if (!std::isfinite(p) || p <= 0) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": price must be > 0");
    }
    if (!out.samples.empty() && t <= out.samples.back().time) {
      throw InputError(path.string() + ":" + std::to_string(line_no) +
                       ": timestamps must be strictly increasing");
    }
    out.samples.push_back({floor_hour(t), p});
  }
  return out;
}

HourlySeries resample_hourly(const DeviceLoadSeries& series) {
  if (series.samples.empty()) {
    throw InputError("cannot resample empty series '" + series.device_name + "'");
  }
  HourlySeries out;
  out.start = floor_hour(series.samples.front().time);
  const Timestamp last = floor_hour(series.samples.back().time);
  const auto hours = static_cast<std::size_t>((last - out.start) / kSecondsPerHour + 1);
  std::vector<double> sum(hours, 0.0);
  std::vector<std::size_t> count(hours, 0);
  Timestamp prev = std::numeric_limits<Timestamp>::min();
  for (const auto& s : series.samples) {
    if (s.time <= prev) throw InputError("timestamps not strictly increasing in '" + series.device_name + "'");
    prev = s.time;
    const auto h = static_cast<std::size_t>((floor_hour(s.time) - out.start) / kSecondsPerHour);
    sum[h] += s.watts;
    ++count[h];
  }
  out.values.resize(hours);
  for (std::size_t h = 0; h < hours; ++h) {
    out.values[h] = count[h] ? sum[h] / static_cast<double>(count[h]) : kMissing;
  }
  return out;
}

std::optional<std::size_t> HourlyTable::index_of(Timestamp t) const {
  if (rows.empty() || t < rows.front().time || t > rows.back().time) return std::nullopt;
  const Timestamp offset = t - rows.front().time;
  if (offset % kSecondsPerHour != 0) return std::nullopt;
  return static_cast<std::size_t>(offset / kSecondsPerHour);
}

std::size_t HourlyTable::missing_weather_cells() const {
  std::size_t n = 0;
  for (const auto& r : rows) {
    for (double v : r.weather) n += is_missing(v) ? 1 : 0;
  }
  return n;
}

bool operator==(const HourlyTable& a, const HourlyTable& b) {
  if (a.household_id != b.household_id || a.device_names != b.device_names ||
      a.rows.size() != b.rows.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& x = a.rows[i];
    const auto& y = b.rows[i];
    if (x.time != y.time || x.aggregate_load != y.aggregate_load || x.price != y.price ||
        x.imputed != y.imputed || x.device_loads != y.device_loads) {
      return false;
    }
    for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) {
      if (!same_double(x.weather[f], y.weather[f])) return false;
    }
  }
  return true;
}

HourlyTable build_hourly_table(std::string household_id, const std::vector<HourlySeries>& devices,
                               const std::vector<std::string>& device_names,
                               const HourlySeries& aggregate, const WeatherSeries& weather,
                               const PriceSeries& prices, JoinReport* report) {
  if (devices.size() != device_names.size()) {
    throw InvariantError("device series and names differ in length");
  }
  if (aggregate.values.empty() || weather.samples.empty()) {
    throw DataError("load or weather series is empty");
  }
  const Timestamp start = std::max(aggregate.start, weather.samples.front().time);
  const Timestamp end = std::min(aggregate.end(), weather.samples.back().time + kSecondsPerHour);
  if (end <= start) {
    throw DataError("load and weather time ranges do not overlap");
  }

  std::map<Timestamp, const WeatherValues*> weather_at;
  for (const auto& s : weather.samples) weather_at.emplace(s.time, &s.values);
  std::map<Timestamp, double> price_at;
  for (const auto& s : prices.samples) price_at.emplace(s.time, s.price_per_kwh);

  auto value_at = [](const HourlySeries& s, Timestamp t) {
    if (t < s.start || t >= s.end()) return kMissing;
    return s.values[static_cast<std::size_t>((t - s.start) / kSecondsPerHour)];
  };

  HourlyTable table;
  table.household_id = std::move(household_id);
  table.device_names = device_names;
  JoinReport rep;
  for (Timestamp t = start; t < end; t += kSecondsPerHour) {
    HourlyRow row;
    row.time = t;
    bool gap = false;
    row.aggregate_load = value_at(aggregate, t);
    if (is_missing(row.aggregate_load)) {
      row.aggregate_load = 0.0;
      gap = true;
    }
    row.device_loads.resize(devices.size());
    for (std::size_t d = 0; d < devices.size(); ++d) {
      double v = value_at(devices[d], t);
      if (is_missing(v)) {
        v = 0.0;
        gap = true;
      }
      row.device_loads[d] = v;
    }
    if (auto it = weather_at.find(t); it != weather_at.end()) {
      row.weather = *it->second;
    } else {
      row.weather.fill(kMissing);
    }
    for (double v : row.weather) rep.missing_weather_cells += is_missing(v) ? 1 : 0;
    if (auto it = price_at.find(t); it != price_at.end()) {
      row.price = it->second;
    } else {
      ++rep.hours_without_price;
    }
    rep.load_gap_hours += gap ? 1 : 0;
    table.rows.push_back(std::move(row));
  }
  rep.rows = table.rows.size();
  if (report) *report = rep;
  return table;
}

std::size_t ImputationReport::total() const {
  std::size_t n = 0;
  for (auto c : imputed_per_feature) n += c;
  return n;
}

HourlyTable knn_impute(const HourlyTable& table, const ImputationOptions& options,
                       ImputationReport* report) {
  if (options.k < 1) throw InputError("imputation k must be >= 1");
  ImputationReport rep;
  HourlyTable out = table;

  std::vector<std::size_t> complete;
  std::vector<std::size_t> incomplete;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& w = table.rows[i].weather;
    const bool full = std::none_of(w.begin(), w.end(), is_missing);
    (full ? complete : incomplete).push_back(i);
  }
  if (incomplete.empty()) {
    if (report) *report = rep;
    return out;
  }
  if (complete.size() < options.k) {
    throw DataError("knn imputation needs at least " + std::to_string(options.k) +
                    " complete weather rows, found " + std::to_string(complete.size()));
  }

  // Per-feature scale from observed cells.
  WeatherValues mean{};
  WeatherValues scale{};
  for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) {
    double sum = 0, sq = 0;
    std::size_t n = 0;
    for (const auto& r : table.rows) {
      if (!is_missing(r.weather[f])) {
        sum += r.weather[f];
        ++n;
      }
    }
    mean[f] = n ? sum / static_cast<double>(n) : 0.0;
    for (const auto& r : table.rows) {
      if (!is_missing(r.weather[f])) sq += (r.weather[f] - mean[f]) * (r.weather[f] - mean[f]);
    }
    const double sd = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
    scale[f] = options.standardize && sd > 0 ? sd : 1.0;
  }

  auto hour_angle = [](Timestamp t) {
    return 2.0 * std::numbers::pi * static_cast<double>(hour_of_day(t)) / 24.0;
  };

  std::vector<std::pair<double, std::size_t>> dist(complete.size());
  for (std::size_t i : incomplete) {
    const auto& row = table.rows[i];
    const double a = hour_angle(row.time);
    for (std::size_t c = 0; c < complete.size(); ++c) {
      const auto& donor = table.rows[complete[c]];
      const double b = hour_angle(donor.time);
      double d2 = (std::sin(a) - std::sin(b)) * (std::sin(a) - std::sin(b)) +
                  (std::cos(a) - std::cos(b)) * (std::cos(a) - std::cos(b));
      for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) {
        if (is_missing(row.weather[f])) continue;
        const double diff = (row.weather[f] - donor.weather[f]) / scale[f];
        d2 += diff * diff;
      }
      dist[c] = {d2, complete[c]};
    }
    // (distance, row index) ordering puts earlier rows first among ties.
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(options.k),
                      dist.end());
    for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) {
      if (!is_missing(row.weather[f])) continue;
      double sum = 0;
      for (std::size_t j = 0; j < options.k; ++j) sum += table.rows[dist[j].second].weather[f];
      out.rows[i].weather[f] = sum / static_cast<double>(options.k);
      out.rows[i].imputed[f] = true;
      ++rep.imputed_per_feature[f];
    }
  }
  if (report) *report = rep;
  return out;
}

void write_hourly_csv(const HourlyTable& table, const fs::path& path) {
  std::ostringstream os;
  os << "time,unix,aggregate";
  for (const auto& name : table.device_names) os << ",dev:" << name;
  for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) os << ',' << weather_feature_key(f);
  os << ",price_per_kwh,imputed_mask\n";
  for (const auto& r : table.rows) {
    os << format_iso_utc(r.time) << ',' << r.time << ',' << detail::format_double(r.aggregate_load);
    for (double v : r.device_loads) os << ',' << detail::format_double(v);
    for (double v : r.weather) {
      os << ',';
      if (!is_missing(v)) os << detail::format_double(v);
    }
    os << ',';
    if (r.price) os << detail::format_double(*r.price);
    unsigned mask = 0;
    for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) mask |= (r.imputed[f] ? 1u : 0u) << f;
    os << ',' << mask << '\n';
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_text_file(path.string(), os.str());
}

HourlyTable read_hourly_csv(const fs::path& path, std::string household_id) {
  std::ifstream in = open_or_throw(path, "hourly table");
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty hourly table: " + path.string());
  const auto header = split_csv_line(line);
  HourlyTable table;
  table.household_id = std::move(household_id);
  std::size_t n_dev = 0;
  for (const auto& h : header) {
    if (h.starts_with("dev:")) {
      table.device_names.emplace_back(h.substr(4));
      ++n_dev;
    }
  }
  const std::size_t expected = 3 + n_dev + kWeatherFeatureCount + 2;
  if (header.size() != expected || header[1] != "unix") {
    throw InputError("unexpected hourly table header in " + path.string());
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    auto fail = [&] {
      return InputError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    };
    if (cells.size() != expected) throw fail();
    HourlyRow r;
    long long t = 0;
    if (!detail::parse_int64(cells[1], t) || !parse_double(cells[2], r.aggregate_load)) throw fail();
    r.time = t;
    r.device_loads.resize(n_dev);
    for (std::size_t d = 0; d < n_dev; ++d) {
      if (!parse_double(cells[3 + d], r.device_loads[d])) throw fail();
    }
    for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) {
      const auto c = cells[3 + n_dev + f];
      r.weather[f] = kMissing;
      if (!c.empty() && !parse_double(c, r.weather[f])) throw fail();
    }
    const auto pc = cells[3 + n_dev + kWeatherFeatureCount];
    if (!pc.empty()) {
      double p = 0;
      if (!parse_double(pc, p)) throw fail();
      r.price = p;
    }
    long long mask = 0;
    if (!detail::parse_int64(cells.back(), mask)) throw fail();
    for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) r.imputed[f] = (mask >> f) & 1;
    if (!table.rows.empty() && r.time != table.rows.back().time + kSecondsPerHour) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": hourly rows not contiguous");
    }
    table.rows.push_back(std::move(r));
  }
  if (table.rows.empty()) throw InputError("hourly table has no rows: " + path.string());
  return table;
}

nlohmann::json imputation_report_json(const LoadReport& load, std::size_t weather_dropped,
                                      const JoinReport& join, const ImputationReport& imputation) {
  nlohmann::json per_feature = nlohmann::json::object();
  for (std::size_t f = 0; f < kWeatherFeatureCount; ++f) {
    per_feature[std::string(weather_feature_key(f))] = imputation.imputed_per_feature[f];
  }
  return {
      {"rows", join.rows},
      {"load_rows_read", load.rows_read},
      {"dropped_rows", load.dropped_rows},
      {"weather_dropped_rows", weather_dropped},
      {"load_gap_hours", join.load_gap_hours},
      {"hours_without_price", join.hours_without_price},
      {"missing_weather_cells", join.missing_weather_cells},
      {"imputed_cells", imputation.total()},
      {"imputed_cells_per_feature", per_feature},
  };
}

}  // namespace loadshift
