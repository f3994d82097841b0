#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace loadshift {

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

inline constexpr Timestamp kSecondsPerHour = 3600;
inline constexpr Timestamp kSecondsPerDay = 86400;
inline constexpr int kHoursPerDay = 24;

/// Missing-cell marker used in hourly series and weather columns.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

// Error taxonomy. The CLI maps each kind onto a distinct exit code.

/// Bad or missing input: files, columns, malformed configuration.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Data that parses but cannot support the requested computation
/// (single-class labels, constant load, insufficient history).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal contract violation.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline Timestamp floor_hour(Timestamp t) {
  Timestamp r = t % kSecondsPerHour;
  if (r < 0) r += kSecondsPerHour;
  return t - r;
}

inline Timestamp floor_day(Timestamp t) {
  Timestamp r = t % kSecondsPerDay;
  if (r < 0) r += kSecondsPerDay;
  return t - r;
}

inline int hour_of_day(Timestamp t) {
  return static_cast<int>((t - floor_day(t)) / kSecondsPerHour);
}

/// Monday = 0 … Sunday = 6. 1970-01-01 was a Thursday.
inline int day_of_week(Timestamp t) {
  const std::int64_t days = floor_day(t) / kSecondsPerDay;
  return static_cast<int>(((days + 3) % 7 + 7) % 7);
}

/// Calendar month 1..12 (UTC).
int month_of(Timestamp t);

/// Parses "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" or "YYYY-MM-DDTHH:MM[:SS]" as UTC.
/// Returns false on malformed input.
bool parse_iso_utc(const std::string& text, Timestamp& out);

/// "YYYY-MM-DD HH:MM:SS" in UTC.
std::string format_iso_utc(Timestamp t);

/// "YYYY-MM-DD" in UTC.
std::string format_date_utc(Timestamp t);

/// SplitMix64 finalizer; used to derive independent per-task seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Deterministic random source. Every stochastic routine takes one of these
/// (or a seed) so results are reproducible across platforms; the standard
/// distributions are implementation-defined, so the draws are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);
  /// Standard normal (Box-Muller, no caching).
  double normal();

 private:
  std::uint64_t state_;
};

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Results must be
/// written by index; the call returns once all tasks finish. The first
/// exception thrown by any task is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

inline double sigmoid(double z) {
  if (z >= 0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace loadshift
