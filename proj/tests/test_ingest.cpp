#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "test_support.hpp"

using namespace loadshift;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "loadshift_ingest_tests";
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_file(const std::string& name, const std::string& content) {
  const fs::path p = scratch(name);
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

std::string refit_header() { return "Time,Unix,Aggregate,Appliance1,Appliance2,Appliance3,Appliance4,Appliance5,Appliance6,Appliance7,Appliance8,Appliance9\n"; }

std::string refit_row(Timestamp t, int aggregate) {
  std::ostringstream s;
  s << format_iso_utc(t) << ',' << t << ',' << aggregate;
  for (int i = 1; i <= 9; ++i) s << ',' << i * 10;
  s << '\n';
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

HourlySeries constant_series(Timestamp start, std::size_t hours, double v) {
  return {start, std::vector<double>(hours, v)};
}

WeatherSeries weather_span(Timestamp start, std::size_t hours) {
  WeatherSeries w;
  for (std::size_t i = 0; i < hours; ++i) {
    w.samples.push_back({start + static_cast<Timestamp>(i) * kSecondsPerHour, {10.0 + static_cast<double>(i % 7), 5.0, 70.0, 180.0, 10.0}});
  }
  return w;
}

// Straightforward restatement of the imputation rule for cross-checking.
double oracle_impute(const HourlyTable& t, std::size_t row, std::size_t feature, std::size_t k) {
  std::array<double, 5> mean{}, scale{};
  for (std::size_t f = 0; f < 5; ++f) {
    std::vector<double> obs;
    for (const auto& r : t.rows) {
      if (!std::isnan(r.weather[f])) obs.push_back(r.weather[f]);
    }
    double m = 0;
    for (double v : obs) m += v;
    m /= static_cast<double>(obs.size());
    double ss = 0;
    for (double v : obs) ss += (v - m) * (v - m);
    const double sd = obs.size() > 1 ? std::sqrt(ss / static_cast<double>(obs.size() - 1)) : 0.0;
    mean[f] = m;
    scale[f] = sd > 0 ? sd : 1.0;
  }
  const auto& target = t.rows[row];
  std::vector<std::pair<double, std::size_t>> cands;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (std::any_of(r.weather.begin(), r.weather.end(), [](double v) { return std::isnan(v); })) continue;
    const double a = 2 * std::numbers::pi * hour_of_day(target.time) / 24.0;
    const double b = 2 * std::numbers::pi * hour_of_day(r.time) / 24.0;
    double d2 = std::pow(std::sin(a) - std::sin(b), 2) + std::pow(std::cos(a) - std::cos(b), 2);
    for (std::size_t f = 0; f < 5; ++f) {
      if (std::isnan(target.weather[f])) continue;
      d2 += std::pow((target.weather[f] - r.weather[f]) / scale[f], 2);
    }
    cands.emplace_back(d2, i);
  }
  std::sort(cands.begin(), cands.end());
  double s = 0;
  for (std::size_t j = 0; j < k; ++j) s += t.rows[cands[j].second].weather[feature];
  return s / static_cast<double>(k);
}

}  // namespace

TEST_CASE("load_household parses the aggregate column") {
  const auto p = write_file("three.csv", refit_header() + refit_row(testing::kJan1, 100) +
                                             refit_row(testing::kJan1 + 60, 200) + refit_row(testing::kJan1 + 120, 300));
  const auto loads = load_household(p, ColumnMap::refit_default());
  REQUIRE(loads.aggregate.samples.size() == 3);
  CHECK(loads.aggregate.samples[0].watts == 100);
  CHECK(loads.aggregate.samples[2].watts == 300);
  CHECK(loads.report.rows_read == 3);
  CHECK(loads.report.dropped_rows == 0);
}

TEST_CASE("load_household drops malformed timestamps and reads nine devices") {
  std::string content = refit_header();
  for (int i = 0; i < 10; ++i) {
    std::string row = refit_row(testing::kJan1 + i * 60, 100 + i);
    if (i == 4) row.replace(row.find(',') + 1, std::to_string(testing::kJan1 + i * 60).size(), "notatime");
    content += row;
  }
  const auto loads = load_household(write_file("ten.csv", content), ColumnMap::refit_default());
  CHECK(loads.aggregate.samples.size() == 9);
  CHECK(loads.report.dropped_rows == 1);
  REQUIRE(loads.devices.size() == 9);
  CHECK(loads.devices[8].samples.size() == 9);
  CHECK(loads.devices[8].samples[0].watts == 90);
  CHECK(loads.devices[2].device_id == 2);
}

TEST_CASE("load_household errors") {
  CHECK_THROWS_AS(load_household(scratch("absent.csv"), ColumnMap::refit_default()), InputError);
  CHECK_THROWS_AS(load_household(write_file("nocol.csv", "Time,Unix,Aggregate\n2015-01-01,1420070400,5\n"),
                                 ColumnMap::refit_default()),
                  InputError);
  CHECK_THROWS_AS(load_household(write_file("norows.csv", refit_header() + "x,y,z,1,2,3,4,5,6,7,8,9\n"),
                                 ColumnMap::refit_default()),
                  InputError);
}

TEST_CASE("resample_hourly takes means and marks gaps") {
  const Timestamp h = testing::kJan1;
  DeviceLoadSeries s{0, "d", {{h, 100}, {h + 1800, 300}, {h + 3600 + 60, 42}, {h + 3 * 3600, 7}}};
  const auto r = resample_hourly(s);
  CHECK(r.start == h);
  REQUIRE(r.values.size() == 4);
  CHECK(r.values[0] == 200);
  CHECK(r.values[1] == 42);
  CHECK(is_missing(r.values[2]));
  CHECK(r.values[3] == 7);
  CHECK_THROWS_AS(resample_hourly(DeviceLoadSeries{}), InputError);
}

TEST_CASE("resampling conserves uniform values") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const double v = std::round(rng.uniform() * 3000);
    const int per_hour = 1 + static_cast<int>(rng.index(12));
    DeviceLoadSeries s{0, "d", {}};
    for (int i = 0; i < per_hour; ++i) s.samples.push_back({testing::kJan1 + i * (3600 / per_hour), v});
    CHECK(resample_hourly(s).values.at(0) == v);
  }
}

TEST_CASE("build_hourly_table keeps the intersection") {
  const Timestamp jan1 = testing::kJan1;
  const Timestamp jan5 = jan1 + 4 * kSecondsPerDay;
  const auto agg = constant_series(jan1, 10 * 24, 300);
  const auto dev = constant_series(jan1, 10 * 24, 0);
  JoinReport rep;
  const auto t = build_hourly_table("h", {dev}, {"d"}, agg, weather_span(jan5, 16 * 24), {}, &rep);
  CHECK(t.rows.size() == 6 * 24);
  CHECK(t.rows.front().time == jan5);
  CHECK(t.rows.back().time == jan1 + 10 * kSecondsPerDay - kSecondsPerHour);
  CHECK(rep.hours_without_price == t.rows.size());

  CHECK_THROWS_AS(build_hourly_table("h", {dev}, {"d"}, agg, weather_span(jan1 + 20 * kSecondsPerDay, 24), {}),
                  DataError);
}

TEST_CASE("join size equals the hour intersection") {
  Rng rng(9);
  for (int trial = 0; trial < 40; ++trial) {
    const Timestamp ls = testing::kJan1 + static_cast<Timestamp>(rng.index(100)) * 3600;
    const std::size_t ln = 1 + rng.index(200);
    const Timestamp ws = testing::kJan1 + static_cast<Timestamp>(rng.index(100)) * 3600;
    const std::size_t wn = 1 + rng.index(200);
    const Timestamp lo = std::max(ls, ws);
    const Timestamp hi = std::min(ls + static_cast<Timestamp>(ln) * 3600, ws + static_cast<Timestamp>(wn) * 3600);
    const auto agg = constant_series(ls, ln, 50);
    if (hi <= lo) {
      CHECK_THROWS_AS(build_hourly_table("h", {}, {}, agg, weather_span(ws, wn), {}), DataError);
    } else {
      CHECK(build_hourly_table("h", {}, {}, agg, weather_span(ws, wn), {}).rows.size() ==
            static_cast<std::size_t>((hi - lo) / 3600));
    }
  }
}

TEST_CASE("missing weather cells are flagged and prices joined") {
  auto w = weather_span(testing::kJan1, 48);
  w.samples[3].values[0] = kMissing;
  w.samples[10].values[2] = kMissing;
  w.samples.erase(w.samples.begin() + 20);  // whole hour absent: five cells
  PriceSeries prices;
  for (int i = 0; i < 24; ++i) prices.samples.push_back({testing::kJan1 + i * 3600, 0.3});
  JoinReport rep;
  const auto t = build_hourly_table("h", {}, {}, constant_series(testing::kJan1, 48, 10), w, prices, &rep);
  CHECK(t.rows.size() == 48);
  CHECK(t.missing_weather_cells() == 7);
  CHECK(rep.missing_weather_cells == 7);
  CHECK(rep.hours_without_price == 24);
  CHECK(t.rows[5].price == 0.3);
  CHECK_FALSE(t.rows[30].price.has_value());
}

TEST_CASE("knn_impute k=1 copies the identical neighbour") {
  auto t = testing::blank_table(6);
  for (std::size_t i = 0; i < t.rows.size(); ++i) t.rows[i].weather = {0.0 + 5.0 * static_cast<double>(i), 1, 2, 3, 4};
  t.rows[2].weather = {12.0, 7, 7, 7, 7};
  t.rows[3].weather = {kMissing, 7, 7, 7, 7};
  ImputationReport rep;
  const auto out = knn_impute(t, {1, true}, &rep);
  CHECK(out.rows[3].weather[0] == 12.0);
  CHECK(out.rows[3].imputed[0]);
  CHECK_FALSE(out.rows[3].imputed[1]);
  CHECK(rep.total() == 1);
  CHECK(out.missing_weather_cells() == 0);
}

TEST_CASE("knn_impute k=2 averages two equidistant neighbours") {
  auto t = testing::blank_table(9);
  for (std::size_t i = 0; i < t.rows.size(); ++i) t.rows[i].weather = {40.0, 0, 50, 0, 0};
  t.rows[3].weather = {10.0, 1, 10, 1, 1};
  t.rows[5].weather = {10.0, 1, 20, 1, 1};
  t.rows[4].weather = {10.0, 1, kMissing, 1, 1};
  const auto out = knn_impute(t, {2, true});
  CHECK(out.rows[4].weather[2] == 15.0);
  CHECK(out.rows[4].weather[2] == doctest::Approx(oracle_impute(t, 4, 2, 2)).epsilon(1e-12));
}

TEST_CASE("knn_impute matches an exhaustive scan on random tables") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = testing::blank_table(72);
    for (auto& r : t.rows) {
      for (auto& v : r.weather) v = std::round(rng.normal() * 20) / 2;
    }
    std::vector<std::pair<std::size_t, std::size_t>> holes;
    for (int h = 0; h < 8; ++h) {
      const std::size_t i = rng.index(t.rows.size()), f = rng.index(5);
      t.rows[i].weather[f] = kMissing;
    }
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      for (std::size_t f = 0; f < 5; ++f) {
        if (std::isnan(t.rows[i].weather[f])) holes.emplace_back(i, f);
      }
    }
    const std::size_t k = 1 + rng.index(5);
    const auto out = knn_impute(t, {k, true});
    for (auto [i, f] : holes) {
      CHECK(out.rows[i].weather[f] == doctest::Approx(oracle_impute(t, i, f, k)).epsilon(1e-12));
    }
  }
}

TEST_CASE("knn_impute is idempotent on complete tables and checks donors") {
  const auto t = testing::blank_table(30);
  CHECK(knn_impute(t, {}) == t);

  auto sparse = testing::blank_table(4);
  for (auto& r : sparse.rows) r.weather[1] = kMissing;
  sparse.rows[0].weather[1] = 3.0;
  CHECK_THROWS_AS(knn_impute(sparse, {2, true}), DataError);
  CHECK_THROWS_AS(knn_impute(sparse, {0, true}), InputError);
}

TEST_CASE("hourly csv round-trips and is byte-deterministic") {
  auto t = testing::blank_table(50, 2);
  t.rows[7].weather[3] = 123.456789;
  t.rows[7].imputed[3] = true;
  t.rows[9].price.reset();
  t.rows[11].device_loads[1] = 1.0 / 3.0;
  const auto a = scratch("a.csv"), b = scratch("b.csv");
  write_hourly_csv(t, a);
  write_hourly_csv(read_hourly_csv(a, "t"), b);
  CHECK(read_hourly_csv(a, "t") == t);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("imputation report lists counts per feature") {
  ImputationReport imp;
  imp.imputed_per_feature = {1, 0, 2, 0, 0};
  JoinReport join;
  LoadReport load;
  load.dropped_rows = 4;
  const auto j = imputation_report_json(load, 2, join, imp);
  CHECK(j["imputed_cells"] == 3);
  CHECK(j["imputed_cells_per_feature"]["rel_humidity"] == 2);
  CHECK(j["dropped_rows"] == 4);
  CHECK(j["weather_dropped_rows"] == 2);
}

TEST_CASE("price and weather readers") {
  const auto w = load_weather(write_file("w.csv", "time,temp,dwpt,rhum,wdir,wspd\n2015-01-01 00:00:00,1.5,,80,90,3\nbad,1,1,1,1,1\n"));
  REQUIRE(w.samples.size() == 1);
  CHECK(w.samples[0].values[0] == 1.5);
  CHECK(is_missing(w.samples[0].values[1]));
  const auto p = load_prices(write_file("p.csv", "time,price_per_kwh\n2015-01-01 00:00,0.25\n"));
  REQUIRE(p.samples.size() == 1);
  CHECK(p.samples[0].price_per_kwh == 0.25);
  CHECK_THROWS_AS(load_prices(write_file("p0.csv", "time,price_per_kwh\n2015-01-01 00:00,0\n")), InputError);
  CHECK_THROWS_AS(load_weather(scratch("nope.csv")), InputError);
}
