#include "loadshift/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "text_util.hpp"

namespace loadshift {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kNoWeatherSuffix = "_no_weather";

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  detail::write_text_file(path.string(), j.dump(2) + "\n");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + " is not valid JSON: " + e.what());
  }
}

void require_file(const fs::path& path, const char* what) {
  if (path.empty()) throw InputError(std::string("no ") + what + " file configured");
  if (!fs::is_regular_file(path)) throw InputError(std::string(what) + " file not found: " + path.string());
}

HourlyTable read_table(const Config& config) {
  const fs::path path = config.household_dir() / "hourly.csv";
  if (!fs::is_regular_file(path)) throw InputError("missing " + path.string() + "; run 'prepare' first");
  return read_hourly_csv(path, config.household);
}

std::vector<std::size_t> shiftable_indices(const Config& config, const HourlyTable& table) {
  std::vector<std::size_t> out;
  if (config.shiftable_devices.empty()) {
    for (std::size_t d = 0; d < table.device_names.size(); ++d) out.push_back(d);
    return out;
  }
  for (const auto& name : config.shiftable_devices) {
    const auto it = std::find(table.device_names.begin(), table.device_names.end(), name);
    if (it == table.device_names.end()) throw InputError("shiftable device '" + name + "' is not in the table");
    out.push_back(static_cast<std::size_t>(it - table.device_names.begin()));
  }
  return out;
}

struct Task {
  std::string name;
  std::optional<std::size_t> device;
  LabeledMatrix matrix;
};

std::string usage_task_name(const std::string& device_name) { return "usage_" + slugify(device_name); }

std::vector<Task> build_tasks(const Config& config, const HourlyTable& table, const std::string& agent) {
  if (agent != "all" && agent != "availability" && agent != "usage") {
    throw InputError("--agent must be availability, usage or all");
  }
  std::vector<Task> tasks;
  if (agent != "usage") {
    const auto labels = label_availability(table, config.availability_policy);
    tasks.push_back({"availability", std::nullopt, build_availability_matrix(table, labels)});
  }
  if (agent != "availability") {
    for (std::size_t d : shiftable_indices(config, table)) {
      const auto labels = label_usage(table, d, config.active_watts);
      tasks.push_back({usage_task_name(table.device_names[d]), d, build_usage_matrix(table, labels)});
    }
  }
  return tasks;
}

std::vector<ModelSpec> load_grid(const Config& config, const std::optional<std::string>& family) {
  std::vector<ModelSpec> grid;
  if (config.grid == "default") {
    grid = default_grid();
  } else {
    require_file(config.grid, "grid");
    grid = grid_from_json(read_json(config.grid));
  }
  if (family) {
    std::erase_if(grid, [&](const ModelSpec& s) { return family_name(s) != *family; });
    if (grid.empty()) throw InputError("grid has no specs of family '" + *family + "'");
  }
  if (grid.empty()) throw InputError("grid is empty");
  return grid;
}

std::vector<fs::path> model_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json" && entry.path().stem() != "selected") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

TrainedModel load_model(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw InputError("missing model " + path.string() + "; run 'train' first");
  return TrainedModel::from_json(read_json(path));
}

void check_width(const TrainedModel& model, const LabeledMatrix& matrix, const fs::path& path) {
  if (model.feature_names() != matrix.feature_names) {
    throw InputError("model " + path.string() + " was trained on different features");
  }
}

json train_variant(const Config& config, const std::vector<ModelSpec>& grid, const std::string& task_dir,
                   const LabeledMatrix& matrix) {
  const auto split = chronological_split(matrix, config.train_fraction);
  const auto inner = chronological_split(split.train, 1.0 - config.validation_fraction);
  if (!inner.test.has_both_classes()) {
    throw DataError("validation range of task '" + task_dir + "' has a single class");
  }
  const TuningReport report = grid_search(grid, inner.train, inner.test, config.seed, config.jobs);
  write_json(config.household_dir() / ("tuning_" + task_dir + ".json"), tuning_report_json(report));

  const fs::path models_dir = config.household_dir() / "models" / task_dir;
  fs::create_directories(models_dir);
  std::vector<std::string> families;
  for (const auto& e : report.entries) {
    const std::string f = family_name(e.spec);
    if (std::find(families.begin(), families.end(), f) == families.end()) families.push_back(f);
  }
  const std::string chosen_family = family_name(report.chosen_spec());
  json written = json::array();
  for (const auto& f : families) {
    const ModelSpec& spec = report.entries[*report.best_of_family(f)].spec;
    const ModelSpec& use = f == chosen_family ? report.chosen_spec() : spec;
    const TrainedModel model = fit_classifier(use, split.train, config.seed, config.jobs);
    write_json(models_dir / (f + ".json"), model.to_json());
    if (f == chosen_family) write_json(models_dir / "selected.json", model.to_json());
    written.push_back(f);
  }
  return {{"task", task_dir},
          {"specs", report.count()},
          {"chosen", spec_to_json(report.chosen_spec())},
          {"validation_auc", report.entries[report.chosen].validation_auc},
          {"feature_names", report.feature_names},
          {"models", written}};
}

Timestamp last_complete_day(const HourlyTable& table) {
  if (table.empty()) throw DataError("hourly table is empty");
  const Timestamp last = table.rows.back().time;
  return hour_of_day(last) == kHoursPerDay - 1 ? floor_day(last) : floor_day(last) - kSecondsPerDay;
}

AgentModel agent_model(const Config& config, const LabeledMatrix& matrix, const fs::path& model_path,
                       std::size_t background_size) {
  AgentModel m{load_model(model_path), {}, {}};
  check_width(m.model, matrix, model_path);
  const auto split = chronological_split(matrix, config.train_fraction);
  m.background = sample_background(split.train, background_size, config.seed);
  m.stats = Standardization::fit(split.train);
  return m;
}

}  // namespace

std::vector<std::string> task_names(const Config& config, const HourlyTable& table) {
  std::vector<std::string> names = {"availability"};
  for (std::size_t d : shiftable_indices(config, table)) names.push_back(usage_task_name(table.device_names[d]));
  return names;
}

json cmd_prepare(const Config& config) {
  require_file(config.refit, "household");
  require_file(config.weather, "weather");
  require_file(config.prices, "price");

  const HouseholdLoads loads = load_household(config.refit, config.columns);
  std::size_t weather_dropped = 0;
  const WeatherSeries weather = load_weather(config.weather, &weather_dropped);
  const PriceSeries prices = load_prices(config.prices);

  std::vector<HourlySeries> devices;
  std::vector<std::string> names;
  for (const auto& d : loads.devices) {
    devices.push_back(resample_hourly(d));
    names.push_back(d.device_name);
  }
  JoinReport join;
  const HourlyTable raw =
      build_hourly_table(config.household, devices, names, resample_hourly(loads.aggregate), weather, prices, &join);
  ImputationReport imputation;
  const HourlyTable table = knn_impute(raw, config.imputation, &imputation);

  const fs::path dir = config.household_dir();
  fs::create_directories(dir);
  write_hourly_csv(table, dir / "hourly.csv");
  const json report = imputation_report_json(loads.report, weather_dropped, join, imputation);
  write_json(dir / "imputation_report.json", report);
  return {{"rows", table.rows.size()},
          {"start", format_iso_utc(table.start())},
          {"devices", table.device_names},
          {"report", report}};
}

json cmd_train(const Config& config, const TrainOptions& options) {
  const HourlyTable table = read_table(config);
  const auto grid = load_grid(config, options.family);
  json summary = json::array();
  for (const Task& task : build_tasks(config, table, options.agent)) {
    summary.push_back(train_variant(config, grid, task.name, task.matrix));
    if (config.ablate_weather) {
      summary.push_back(
          train_variant(config, grid, task.name + kNoWeatherSuffix, drop_group(task.matrix, FeatureGroup::Weather)));
    }
  }
  return {{"grid_size", grid.size()}, {"tasks", summary}};
}

json cmd_evaluate(const Config& config) {
  const HourlyTable table = read_table(config);
  json aucs = json::object();
  for (const Task& task : build_tasks(config, table, "all")) {
    for (const std::string suffix : {"", kNoWeatherSuffix}) {
      const std::string task_dir = task.name + suffix;
      const auto files = model_files(config.household_dir() / "models" / task_dir);
      if (files.empty()) continue;
      const LabeledMatrix matrix = suffix.empty() ? task.matrix : drop_group(task.matrix, FeatureGroup::Weather);
      const auto split = chronological_split(matrix, config.train_fraction);
      json row = json::object();
      for (const auto& path : files) {
        const TrainedModel model = load_model(path);
        check_width(model, matrix, path);
        if (!split.test.has_both_classes()) {
          row[model.family()] = nullptr;
          continue;
        }
        std::vector<int> labels;
        for (const auto& r : split.test.rows) labels.push_back(r.label);
        row[model.family()] = auc(predict_all(model, split.test), labels);
      }
      aucs[task_dir] = row;
    }
  }

  json load = json::object();
  const std::size_t boundary_row =
      static_cast<std::size_t>(std::ceil(config.train_fraction * static_cast<double>(table.rows.size()) - 1e-9));
  const Timestamp boundary = table.rows.at(std::min(boundary_row, table.rows.size() - 1)).time;
  for (std::size_t d : shiftable_indices(config, table)) {
    const auto train_cycles = extract_cycles(table, d, config.active_watts, table.start(), boundary);
    const auto test_cycles =
        extract_cycles(table, d, config.active_watts, boundary, table.rows.back().time + kSecondsPerHour);
    json entry = {{"train_cycles", train_cycles.size()}, {"test_cycles", test_cycles.size()}};
    if (!train_cycles.empty() && !test_cycles.empty()) {
      const auto profile = profile_from_cycles(d, train_cycles);
      entry["duration_hours"] = profile.duration_hours;
      entry["profile"] = profile.hourly_load;
      entry["mse"] = mse(profile.hourly_load, test_cycles);
    } else {
      entry["mse"] = nullptr;
    }
    load[table.device_names[d]] = entry;
  }
  const json metrics = {{"auc", aucs}, {"load_mse", load}};
  write_json(config.household_dir() / "metrics.json", metrics);
  return metrics;
}

json cmd_recommend(const Config& config, std::optional<Timestamp> date) {
  const HourlyTable table = read_table(config);
  const Timestamp day = date ? *date : last_complete_day(table);
  if (day != floor_day(day)) throw InputError("--date must be a calendar day");
  const fs::path models = config.household_dir() / "models";

  auto availability_labels = label_availability(table, config.availability_policy);
  AgentModel availability = agent_model(config, build_availability_matrix(table, availability_labels),
                                        models / "availability" / "selected.json", config.background_size);
  std::vector<DeviceState> devices;
  for (std::size_t d : shiftable_indices(config, table)) {
    auto labels = label_usage(table, d, config.active_watts);
    const std::string& name = table.device_names[d];
    AgentModel usage = agent_model(config, build_usage_matrix(table, labels),
                                   models / usage_task_name(name) / "selected.json", config.background_size);
    devices.push_back({d, name, std::move(labels), std::move(usage)});
  }
  const HouseholdState state{table, std::move(availability_labels), std::move(availability), std::move(devices)};

  PipelineConfig pc;
  pc.thresholds = config.thresholds;
  pc.active_watts = config.active_watts;
  pc.method = config.explainer;
  pc.explainer.kernel_samples = config.kernel_samples;
  pc.explainer.lime = config.lime;
  pc.explainer.seed = config.seed;
  pc.daily_run_hour = config.daily_run_hour;
  const DailyResult result = run_daily_pipeline(state, day, pc);

  const fs::path out_dir = config.household_dir() / "recommendations" / format_date_utc(day);
  fs::remove_all(out_dir);
  fs::create_directories(out_dir);
  const json doc = recommendation_json(result, config.household, config.daily_run_hour);
  write_json(out_dir / "recommendation.json", doc);
  json artifacts = json::array();
  for (const auto& [name, content] : result.artifacts) {
    detail::write_text_file((out_dir / name).string(), content);
    artifacts.push_back(name);
  }
  return {{"date", format_date_utc(day)}, {"directory", out_dir.string()}, {"artifacts", artifacts}, {"items", doc["items"]}};
}

json cmd_explain_eval(const Config& config) {
  const HourlyTable table = read_table(config);
  constexpr double kCutoff = 0.5;
  json summary = json::array();
  for (const Task& task : build_tasks(config, table, "all")) {
    const auto files = model_files(config.household_dir() / "models" / task.name);
    if (files.empty()) throw InputError("no trained models for task '" + task.name + "'; run 'train' first");
    const auto split = chronological_split(task.matrix, config.train_fraction);

    std::vector<std::vector<EvalInstance>> days;
    Timestamp current = -1;
    for (const auto& row : split.test.rows) {
      const Timestamp day = floor_day(row.time);
      if (day != current) {
        if (days.size() == config.eval_max_days) break;
        days.emplace_back();
        current = day;
      }
      days.back().push_back({row.features, row.label});
    }
    const BackgroundSet background = sample_background(split.train, config.eval_background_size, config.seed);
    const Standardization stats = Standardization::fit(split.train);
    ExplainerSettings settings;
    settings.kernel_samples = config.kernel_samples;
    settings.lime = config.lime;
    settings.seed = config.seed;

    json results = json::array();
    std::size_t instances = 0;
    for (const auto& d : days) instances += d.size();
    for (ExplainerMethod method : config.eval_methods) {
      for (const auto& path : files) {
        const TrainedModel model = load_model(path);
        check_width(model, task.matrix, path);
        if (!method_supports(method, model)) continue;
        const Explainer explainer = make_explainer(method, model, background, stats, settings);
        json r = explainer_report_json(evaluate_explainer(explainer, model, days, kCutoff));
        r["method"] = std::string(to_string(method));
        r["model"] = model.family();
        results.push_back(std::move(r));
      }
    }
    const json doc = {{"task", task.name},
                      {"cutoff", kCutoff},
                      {"days", days.size()},
                      {"instances", instances},
                      {"background_size", background.rows.size()},
                      {"results", results}};
    write_json(config.household_dir() / ("explain_eval_" + task.name + ".json"), doc);
    summary.push_back(doc);
  }
  return summary;
}

}  // namespace loadshift
