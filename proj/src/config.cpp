#include "loadshift/config.hpp"

#include <algorithm>
#include <fstream>

namespace loadshift {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "refit", "weather", "prices", "workdir", "household", "column_map", "shiftable_devices", "imputation",
      "availability_policy", "active_watts", "thresholds", "train_fraction", "validation_fraction", "grid", "seed",
      "jobs", "ablate_weather", "background_size", "explainer", "eval_methods", "eval_max_days", "eval_background_size", "kernel_samples",
      "lime", "daily_run_hour"};
  return keys;
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(std::string("config key '") + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

void Config::validate() const {
  if (household.empty()) throw InputError("household id must not be empty");
  if (columns.appliances.empty()) throw InputError("column_map must map at least one appliance");
  if (imputation.k < 1) throw InputError("imputation.k must be >= 1");
  if (!(active_watts > 0)) throw InputError("active_watts must be > 0");
  if (!(thresholds.usage > 0 && thresholds.usage < 1)) throw InputError("thresholds.usage must lie in (0, 1)");
  if (!(thresholds.availability > 0 && thresholds.availability < 1)) {
    throw InputError("thresholds.availability must lie in (0, 1)");
  }
  if (!(train_fraction > 0 && train_fraction < 1)) throw InputError("train_fraction must lie in (0, 1)");
  if (!(validation_fraction > 0 && validation_fraction < 1)) {
    throw InputError("validation_fraction must lie in (0, 1)");
  }
  if (jobs < 1) throw InputError("jobs must be >= 1");
  if (background_size < 1) throw InputError("background_size must be >= 1");
  if (eval_max_days < 1) throw InputError("eval_max_days must be >= 1");
  if (eval_background_size < 1) throw InputError("eval_background_size must be >= 1");
  if (daily_run_hour < 0 || daily_run_hour > 23) throw InputError("daily_run_hour must lie in [0, 23]");
  if (!(lime.l2_penalty >= 0)) throw InputError("lime.l2_penalty must be >= 0");
}

Config config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
      throw InputError("unknown config key '" + key + "'");
    }
  }
  Config c;
  if (j.contains("refit")) c.refit = resolve(base_dir, j.at("refit").get<std::string>());
  if (j.contains("weather")) c.weather = resolve(base_dir, j.at("weather").get<std::string>());
  if (j.contains("prices")) c.prices = resolve(base_dir, j.at("prices").get<std::string>());
  if (j.contains("workdir")) c.workdir = resolve(base_dir, j.at("workdir").get<std::string>());
  read(j, "household", c.household);

  if (j.contains("column_map")) {
    const json& m = j.at("column_map");
    read(m, "time", c.columns.time_column);
    read(m, "aggregate", c.columns.aggregate_column);
    if (m.contains("appliances")) {
      c.columns.appliances.clear();
      for (const auto& a : m.at("appliances")) {
        c.columns.appliances.emplace_back(a.at("column").get<std::string>(), a.at("name").get<std::string>());
      }
    }
  }
  read(j, "shiftable_devices", c.shiftable_devices);
  if (j.contains("imputation")) {
    read(j.at("imputation"), "k", c.imputation.k);
    read(j.at("imputation"), "standardize", c.imputation.standardize);
  }
  if (j.contains("availability_policy")) {
    const json& p = j.at("availability_policy");
    if (p.contains("absolute_threshold") && !p.at("absolute_threshold").is_null()) {
      c.availability_policy.absolute_threshold = p.at("absolute_threshold").get<double>();
    }
    read(p, "iqr_fraction", c.availability_policy.iqr_fraction);
  }
  read(j, "active_watts", c.active_watts);
  if (j.contains("thresholds")) {
    const json& t = j.at("thresholds");
    read(t, "usage", c.thresholds.usage);
    read(t, "availability", c.thresholds.availability);
    read(t, "strict_availability", c.thresholds.strict_availability);
    read(t, "price_only", c.thresholds.price_only);
  }
  read(j, "train_fraction", c.train_fraction);
  read(j, "validation_fraction", c.validation_fraction);
  if (j.contains("grid")) {
    const std::string g = j.at("grid").get<std::string>();
    c.grid = g == "default" ? g : resolve(base_dir, g).string();
  }
  read(j, "seed", c.seed);
  read(j, "jobs", c.jobs);
  read(j, "ablate_weather", c.ablate_weather);
  read(j, "background_size", c.background_size);
  if (j.contains("explainer")) c.explainer = explainer_method_from_string(j.at("explainer").get<std::string>());
  if (j.contains("eval_methods")) {
    c.eval_methods.clear();
    for (const auto& m : j.at("eval_methods")) c.eval_methods.push_back(explainer_method_from_string(m.get<std::string>()));
  }
  read(j, "eval_max_days", c.eval_max_days);
  read(j, "eval_background_size", c.eval_background_size);
  read(j, "kernel_samples", c.kernel_samples);
  if (j.contains("lime")) {
    const json& l = j.at("lime");
    read(l, "n_perturbations", c.lime.n_perturbations);
    read(l, "l2_penalty", c.lime.l2_penalty);
    if (l.contains("kernel_width") && !l.at("kernel_width").is_null()) {
      c.lime.kernel_width = l.at("kernel_width").get<double>();
    }
  }
  read(j, "daily_run_hour", c.daily_run_hour);
  c.validate();
  return c;
}

Config load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

json config_to_json(const Config& c) {
  json appliances = json::array();
  for (const auto& [col, name] : c.columns.appliances) appliances.push_back({{"column", col}, {"name", name}});
  json methods = json::array();
  for (auto m : c.eval_methods) methods.push_back(std::string(to_string(m)));
  return {
      {"refit", c.refit.string()},
      {"weather", c.weather.string()},
      {"prices", c.prices.string()},
      {"workdir", c.workdir.string()},
      {"household", c.household},
      {"column_map",
       {{"time", c.columns.time_column}, {"aggregate", c.columns.aggregate_column}, {"appliances", appliances}}},
      {"shiftable_devices", c.shiftable_devices},
      {"imputation", {{"k", c.imputation.k}, {"standardize", c.imputation.standardize}}},
      {"availability_policy",
       {{"absolute_threshold", c.availability_policy.absolute_threshold ? json(*c.availability_policy.absolute_threshold)
                                                                        : json(nullptr)},
        {"iqr_fraction", c.availability_policy.iqr_fraction}}},
      {"active_watts", c.active_watts},
      {"thresholds",
       {{"usage", c.thresholds.usage},
        {"availability", c.thresholds.availability},
        {"strict_availability", c.thresholds.strict_availability},
        {"price_only", c.thresholds.price_only}}},
      {"train_fraction", c.train_fraction},
      {"validation_fraction", c.validation_fraction},
      {"grid", c.grid},
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"ablate_weather", c.ablate_weather},
      {"background_size", c.background_size},
      {"explainer", std::string(to_string(c.explainer))},
      {"eval_methods", methods},
      {"eval_max_days", c.eval_max_days},
      {"eval_background_size", c.eval_background_size},
      {"kernel_samples", c.kernel_samples},
      {"lime",
       {{"n_perturbations", c.lime.n_perturbations},
        {"l2_penalty", c.lime.l2_penalty},
        {"kernel_width", c.lime.kernel_width ? json(*c.lime.kernel_width) : json(nullptr)}}},
      {"daily_run_hour", c.daily_run_hour},
  };
}

}  // namespace loadshift
