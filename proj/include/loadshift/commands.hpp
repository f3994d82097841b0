#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "loadshift/config.hpp"

namespace loadshift {

// Each command reads and writes files under config.household_dir() and
// returns a short JSON summary of what it produced.

/// Ingest, align and impute. Writes hourly.csv and imputation_report.json.
nlohmann::json cmd_prepare(const Config& config);

struct TrainOptions {
  std::string agent = "all";            // availability | usage | all
  std::optional<std::string> family;    // restrict the grid to one family
};

/// Grid search per task. Writes models/<task>/<family>.json, selected.json and
/// tuning_<task>.json (plus the *_no_weather variants when ablating).
nlohmann::json cmd_train(const Config& config, const TrainOptions& options);

/// Test-split AUC for every trained model and load-profile MSE. Writes metrics.json.
nlohmann::json cmd_evaluate(const Config& config);

/// Daily pipeline for `date` (defaults to the last complete day in the table).
/// Writes recommendations/<date>/recommendation.json plus texts and SVG charts.
nlohmann::json cmd_recommend(const Config& config, std::optional<Timestamp> date);

/// Accuracy, fidelity, MAEE and duration per method and model family.
/// Writes explain_eval_<task>.json.
nlohmann::json cmd_explain_eval(const Config& config);

/// Task names in training order: "availability", then "usage_<device slug>".
std::vector<std::string> task_names(const Config& config, const HourlyTable& table);

}  // namespace loadshift
