#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "loadshift/commands.hpp"

namespace {

int fail(int code, const std::string& message) {
  std::cerr << "loadshift: " << message << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace loadshift;

  CLI::App app{"Explainable load-shifting recommendations for one household"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool ablate = false;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for every random choice");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--ablate-weather", ablate, "Also train without the weather features");

  auto* prepare = app.add_subcommand("prepare", "Ingest, align and impute the household data");

  TrainOptions train_options;
  std::optional<std::string> family;
  std::string grid;
  auto* train = app.add_subcommand("train", "Grid-search and fit the availability and usage models");
  train->add_option("--agent", train_options.agent, "availability, usage or all")
      ->check(CLI::IsMember({"availability", "usage", "all"}));
  train->add_option("--family", family, "Restrict the grid to one model family")
      ->check(CLI::IsMember({"logit", "knn", "tree", "random_forest", "adaboost", "gbdt"}));
  train->add_option("--grid", grid, "'default' or a JSON grid file");

  auto* evaluate = app.add_subcommand("evaluate", "Test-split AUC per model and load-profile MSE");

  std::string date_text;
  auto* recommend = app.add_subcommand("recommend", "Explained recommendations for one day");
  recommend->add_option("--date", date_text, "Day to plan (YYYY-MM-DD); defaults to the last complete day");

  auto* explain_eval = app.add_subcommand("explain-eval", "Accuracy, fidelity, MAEE and runtime of the explainers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Config config = config_path.empty() ? Config{} : load_config(config_path);
    if (seed) config.seed = *seed;
    if (jobs) config.jobs = *jobs;
    if (ablate) config.ablate_weather = true;
    if (!grid.empty()) config.grid = grid;
    train_options.family = family;
    config.validate();

    nlohmann::json summary;
    if (prepare->parsed()) {
      summary = cmd_prepare(config);
    } else if (train->parsed()) {
      summary = cmd_train(config, train_options);
    } else if (evaluate->parsed()) {
      summary = cmd_evaluate(config);
    } else if (recommend->parsed()) {
      std::optional<Timestamp> date;
      if (!date_text.empty()) {
        Timestamp t = 0;
        if (!parse_iso_utc(date_text + " 00:00", t)) throw InputError("invalid --date '" + date_text + "'");
        date = t;
      }
      summary = cmd_recommend(config, date);
    } else if (explain_eval->parsed()) {
      summary = cmd_explain_eval(config);
    }
    std::cout << summary.dump(2) << '\n';
    return 0;
  } catch (const InputError& e) {
    return fail(2, e.what());
  } catch (const DataError& e) {
    return fail(3, e.what());
  } catch (const InvariantError& e) {
    return fail(4, e.what());
  } catch (const PipelineError& e) {
    return fail(3, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(2, e.what());
  } catch (const std::exception& e) {
    return fail(4, std::string("internal error: ") + e.what());
  }
}
