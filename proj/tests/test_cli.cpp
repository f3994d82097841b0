#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const fs::path& root() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "loadshift_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run run(const std::string& args) {
  const fs::path out = root() / "stdout.txt";
  const fs::path err = root() / "stderr.txt";
  const std::string cmd = args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

Run loadshift(const fs::path& config, const std::string& args) {
  return run(std::string(LOADSHIFT_CLI) + " --config " + config.string() + " " + args);
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// One synthetic household shared by the cases below; prepared once.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const fs::path d = root() / "house";
    const auto r = run(std::string(MAKE_SYNTHETIC) + " --out " + d.string() + " --days 60 --seed 3 --missing-fraction 0.02");
    REQUIRE(r.code == 0);
    json grid = json::array({{{"family", "logit"}, {"l2_lambda", 0.1}},
                             {{"family", "tree"}, {"max_depth", 3}, {"min_leaf", 5}},
                             {{"family", "gbdt"}, {"n_rounds", 20}, {"max_depth", 2}, {"learning_rate", 0.1}}});
    std::ofstream(d / "small_grid.json") << grid.dump();
    json config = read_json(d / "config.json");
    config["grid"] = "small_grid.json";
    config["eval_max_days"] = 1;
    config["eval_background_size"] = 8;
    std::ofstream(d / "config.json") << config.dump(2);
    return d;
  }();
  return dir;
}

fs::path household_dir() { return dataset() / "work" / "synthetic"; }

std::size_t blank_weather_cells(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  std::size_t blanks = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col > 0 && cell.empty()) ++blanks;
      ++col;
    }
    if (!line.empty() && line.back() == ',') ++blanks;
  }
  return blanks;
}

}  // namespace

TEST_CASE("prepare imputes every blank weather cell") {
  const auto r = loadshift(dataset() / "config.json", "prepare");
  REQUIRE(r.code == 0);
  const auto summary = json::parse(r.out);
  CHECK(summary["rows"] == 60 * 24);
  const std::size_t blanks = blank_weather_cells(dataset() / "weather.csv");
  CHECK(blanks > 0);
  CHECK(summary["report"]["imputed_cells"] == blanks);
  CHECK(fs::exists(household_dir() / "hourly.csv"));
  CHECK(read_json(household_dir() / "imputation_report.json") == summary["report"]);
}

TEST_CASE("input errors exit with code 2 and name the problem") {
  json config = read_json(dataset() / "config.json");
  config["weather"] = "no_such_weather.csv";
  const fs::path bad = dataset() / "bad_config.json";
  std::ofstream(bad) << config.dump();
  auto r = loadshift(bad, "prepare");
  CHECK(r.code == 2);
  CHECK(r.err.find("no_such_weather.csv") != std::string::npos);

  r = loadshift(dataset() / "config.json", "train --agent sometimes");
  CHECK(r.code == 2);
  r = run(std::string(LOADSHIFT_CLI) + " --config " + (dataset() / "missing.json").string() + " prepare");
  CHECK(r.code == 2);
  r = loadshift(dataset() / "config.json", "recommend --date 2015-13-01");
  CHECK(r.code == 2);
}

TEST_CASE("train, evaluate, recommend and explain-eval") {
  const fs::path config = dataset() / "config.json";
  REQUIRE(loadshift(config, "prepare").code == 0);
  auto r = loadshift(config, "train");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto trained = json::parse(r.out);
  CHECK(trained["grid_size"] == 3);
  CHECK(trained["tasks"].size() == 4);
  for (const char* task : {"availability", "usage_washing_machine", "usage_dishwasher", "usage_tumble_dryer"}) {
    for (const char* family : {"logit", "tree", "gbdt", "selected"}) {
      CHECK(fs::exists(household_dir() / "models" / task / (std::string(family) + ".json")));
    }
    CHECK(fs::exists(household_dir() / ("tuning_" + std::string(task) + ".json")));
  }

  r = loadshift(config, "evaluate");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto metrics = read_json(household_dir() / "metrics.json");
  CHECK(metrics["auc"].contains("availability"));
  for (const auto& [family, value] : metrics["auc"]["availability"].items()) {
    CHECK(value.get<double>() >= 0.0);
    CHECK(value.get<double>() <= 1.0);
  }
  CHECK(metrics["load_mse"].contains("Washing Machine"));

  r = loadshift(config, "recommend --date 2015-02-25");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const fs::path day_dir = household_dir() / "recommendations" / "2015-02-25";
  const auto doc = read_json(day_dir / "recommendation.json");
  CHECK(doc["date"] == "2015-02-25");
  CHECK(doc["items"].size() == 3);
  std::map<std::string, std::string> first;
  for (const auto& e : fs::directory_iterator(day_dir)) first[e.path().filename().string()] = slurp(e.path());
  for (const auto& item : doc["items"]) {
    if (item["status"] != "recommended") continue;
    CHECK(item["explanations"]["usage"]["text"].get<std::string>().rfind("We recommend using the ", 0) == 0);
  }
  REQUIRE(loadshift(config, "recommend --date 2015-02-25").code == 0);
  std::map<std::string, std::string> second;
  for (const auto& e : fs::directory_iterator(day_dir)) second[e.path().filename().string()] = slurp(e.path());
  CHECK(first == second);

  r = loadshift(config, "explain-eval");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto ev = read_json(household_dir() / "explain_eval_availability.json");
  CHECK(ev["days"] == 1);
  std::set<std::string> methods;
  for (const auto& row : ev["results"]) {
    const std::string method = row["method"];
    methods.insert(method);
    if (method != "lime") {
      CHECK(row["fidelity"] == 1.0);
      CHECK(row["maee"].get<double>() <= 1e-9);
    }
  }
  CHECK(methods == std::set<std::string>{"kernel_shap", "tree_shap", "lime"});
}

TEST_CASE("default grid with weather ablation") {
  const fs::path config = dataset() / "config.json";
  REQUIRE(loadshift(config, "prepare").code == 0);
  const auto r = loadshift(config, "train --agent usage --grid default --ablate-weather");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto summary = json::parse(r.out);
  CHECK(summary["grid_size"] == 87);
  REQUIRE(summary["tasks"].size() == 6);
  for (std::size_t i = 0; i < 6; i += 2) {
    const auto& with = summary["tasks"][i];
    const auto& without = summary["tasks"][i + 1];
    CHECK(with["specs"] == 87);
    CHECK(without["specs"] == 87);
    CHECK(without["task"] == with["task"].get<std::string>() + "_no_weather");
    std::set<std::string> a = with["feature_names"], b = without["feature_names"], diff;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(diff, diff.end()));
    CHECK(diff.size() == 5);
    CHECK(std::includes(a.begin(), a.end(), b.begin(), b.end()));
  }
}

TEST_CASE("degenerate labels exit with code 3") {
  json config = read_json(dataset() / "config.json");
  config["availability_policy"] = {{"absolute_threshold", 1e9}};
  config["workdir"] = "work_degenerate";
  const fs::path path = dataset() / "degenerate.json";
  std::ofstream(path) << config.dump();
  REQUIRE(loadshift(path, "prepare").code == 0);
  const auto r = loadshift(path, "train --agent availability");
  CHECK(r.code == 3);
  CHECK_FALSE(r.err.empty());
}
