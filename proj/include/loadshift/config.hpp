#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "loadshift/agents.hpp"
#include "loadshift/explainers.hpp"
#include "loadshift/features.hpp"
#include "loadshift/ingest.hpp"

namespace loadshift {

/// Every setting of a run. Loaded from a JSON file; absent keys keep the
/// defaults below and command-line flags override both.
struct Config {
  std::filesystem::path refit;
  std::filesystem::path weather;
  std::filesystem::path prices;
  std::filesystem::path workdir = "work";
  std::string household = "household";

  ColumnMap columns = ColumnMap::refit_default();
  /// Display names of the devices to schedule; empty means every mapped device.
  std::vector<std::string> shiftable_devices;

  ImputationOptions imputation;
  AvailabilityPolicy availability_policy;
  double active_watts = 20.0;
  Thresholds thresholds;

  double train_fraction = 0.8;
  double validation_fraction = 0.2;  // tail of the training range used for tuning
  std::string grid = "default";      // "default" or a path to a JSON grid

  std::uint64_t seed = 42;
  int jobs = 1;
  bool ablate_weather = false;

  std::size_t background_size = 100;
  ExplainerMethod explainer = ExplainerMethod::TreeShap;
  std::vector<ExplainerMethod> eval_methods = {ExplainerMethod::KernelShap, ExplainerMethod::TreeShap,
                                               ExplainerMethod::Lime};
  std::size_t eval_max_days = 2;
  std::size_t eval_background_size = 20;
  std::size_t kernel_samples = 2048;
  LimeOptions lime;
  int daily_run_hour = 7;

  /// `<workdir>/<household>`
  std::filesystem::path household_dir() const { return workdir / household; }
  /// Throws InputError on out-of-range values.
  void validate() const;
};

/// Relative paths in the file resolve against the file's directory.
Config load_config(const std::filesystem::path& path);
Config config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const Config& config);

}  // namespace loadshift
