#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "loadshift/synthetic.hpp"

int main(int argc, char** argv) {
  using namespace loadshift;
  CLI::App app{"Writes a synthetic REFIT-style household, weather, prices and a matching config"};
  SyntheticOptions options;
  std::string out = "synthetic";
  bool no_weather_usage = false;
  app.add_option("--out", out, "Output directory");
  app.add_option("--days", options.days, "Number of days")->check(CLI::PositiveNumber);
  app.add_option("--seed", options.seed, "Generator seed");
  app.add_option("--missing-fraction", options.weather_missing_fraction, "Share of blank weather cells")
      ->check(CLI::Range(0.0, 1.0));
  app.add_flag("--no-weather-usage", no_weather_usage, "Make device usage independent of the weather");
  CLI11_PARSE(app, argc, argv);
  options.weather_dependent_usage = !no_weather_usage;

  try {
    const auto household = generate_household(options);
    const auto files = write_synthetic_files(household, options, out);
    nlohmann::json appliances = nlohmann::json::array();
    for (std::size_t i = 0; i < synthetic_devices().size(); ++i) {
      appliances.push_back({{"column", "Appliance" + std::to_string(i + 1)}, {"name", synthetic_devices()[i].name}});
    }
    const nlohmann::json config = {{"refit", "household.csv"},
                                   {"weather", "weather.csv"},
                                   {"prices", "prices.csv"},
                                   {"workdir", "work"},
                                   {"household", options.household_id},
                                   {"column_map", {{"appliances", appliances}}}};
    std::ofstream(std::filesystem::path(out) / "config.json") << config.dump(2) << '\n';
    std::cout << "wrote " << household.table.rows.size() << " hours to " << out << " ("
              << files.blanked_weather_cells << " blank weather cells)\n";
  } catch (const std::exception& e) {
    std::cerr << "make_synthetic: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
