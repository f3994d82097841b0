#include <atomic>
#include <set>

#include "doctest.h"
#include "loadshift/core.hpp"

using namespace loadshift;

TEST_CASE("calendar helpers") {
  Timestamp t = 0;
  REQUIRE(parse_iso_utc("2015-01-01 00:00:00", t));
  CHECK(t == 1420070400);
  CHECK(day_of_week(t) == 3);  // Thursday
  REQUIRE(parse_iso_utc("2016-02-29T13:45", t));
  CHECK(format_iso_utc(t) == "2016-02-29 13:45:00");
  CHECK(hour_of_day(t) == 13);
  CHECK(month_of(t) == 2);
  CHECK(format_date_utc(t) == "2016-02-29");
  REQUIRE(parse_iso_utc("2015-06-01", t));
  CHECK(t == floor_day(t));

  CHECK_FALSE(parse_iso_utc("2015-02-29 00:00", t));
  CHECK_FALSE(parse_iso_utc("2015-13-01 00:00", t));
  CHECK_FALSE(parse_iso_utc("2015-01-01 24:00", t));
  CHECK_FALSE(parse_iso_utc("yesterday", t));
}

TEST_CASE("floor helpers handle negative times") {
  CHECK(floor_hour(-1) == -3600);
  CHECK(floor_day(-1) == -86400);
  CHECK(day_of_week(-1) == 2);  // 1969-12-31 was a Wednesday
}

TEST_CASE("rng is deterministic and in range") {
  Rng a(7), b(7), c(8);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    differs = differs || u != c.uniform();
  }
  CHECK(differs);

  Rng r(3);
  std::set<std::size_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const std::size_t k = r.index(5);
    CHECK(k < 5);
    seen.insert(k);
  }
  CHECK(seen.size() == 5);

  double sum = 0, sq = 0;
  Rng n(11);
  for (int i = 0; i < 20000; ++i) {
    const double z = n.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / 20000) < 0.03);
  CHECK(std::abs(sq / 20000 - 1.0) < 0.05);
}

TEST_CASE("mix_seed separates nearby inputs") {
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(0, 1));
  CHECK(mix_seed(5, 9) == mix_seed(5, 9));
}

TEST_CASE("parallel_for visits each index once and propagates errors") {
  for (int jobs : {1, 4}) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw DataError("boom");
                               }),
                  DataError);
}

TEST_CASE("sigmoid and logit") {
  CHECK(sigmoid(0) == 0.5);
  CHECK(sigmoid(800) == 1.0);
  CHECK(sigmoid(-800) >= 0.0);
  CHECK(logit(sigmoid(1.25)) == doctest::Approx(1.25).epsilon(1e-12));
}
