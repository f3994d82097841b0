#include <cmath>

#include "loadshift/learners.hpp"

namespace loadshift {

using nlohmann::json;

std::optional<std::size_t> TuningReport::best_of_family(const std::string& family) const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (family_name(entries[i].spec) != family) continue;
    if (!best || entries[i].validation_auc > entries[*best].validation_auc) best = i;
  }
  return best;
}

TuningReport grid_search(const std::vector<ModelSpec>& grid, const LabeledMatrix& train,
                         const LabeledMatrix& validation, std::uint64_t seed, int jobs) {
  if (grid.empty()) throw InputError("grid search needs at least one spec");
  for (const auto& spec : grid) validate_spec(spec);
  if (!validation.has_both_classes()) throw DataError("validation split needs both classes");

  std::vector<int> y;
  y.reserve(validation.rows.size());
  for (const auto& r : validation.rows) y.push_back(r.label);

  TuningReport report;
  report.feature_names = train.feature_names;
  report.entries.resize(grid.size());
  // Cells are independent; each writes its own slot, so the result does not
  // depend on scheduling.
  parallel_for(grid.size(), jobs, [&](std::size_t i) {
    const TrainedModel model = fit_classifier(grid[i], train, seed);
    report.entries[i] = {grid[i], auc(predict_all(model, validation), y)};
  });
  for (std::size_t i = 1; i < report.entries.size(); ++i) {
    if (report.entries[i].validation_auc > report.entries[report.chosen].validation_auc) report.chosen = i;
  }
  return report;
}

std::vector<ModelSpec> default_grid() {
  std::vector<ModelSpec> grid;
  // logit: 6
  for (double lambda : {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0}) {
    LogitSpec s;
    s.l2_lambda = lambda;
    grid.emplace_back(s);
  }
  // knn: 4 x 2 = 8
  for (int k : {5, 15, 35, 75}) {
    for (bool weighted : {false, true}) grid.emplace_back(KnnSpec{k, weighted});
  }
  // random_forest: 3 x 3 x 3 = 27
  for (int n_trees : {50, 100, 200}) {
    for (int depth : {4, 8, 12}) {
      for (int min_leaf : {1, 5, 10}) {
        ForestSpec s;
        s.n_trees = n_trees;
        s.max_depth = depth;
        s.min_leaf = min_leaf;
        grid.emplace_back(s);
      }
    }
  }
  // adaboost: 5 x 2 = 10
  for (int rounds : {25, 50, 100, 200, 400}) {
    for (double lr : {0.5, 1.0}) grid.emplace_back(AdaBoostSpec{rounds, lr});
  }
  // gbdt: 3 x 4 x 3 = 36
  for (int rounds : {50, 100, 200}) {
    for (int depth : {2, 3, 4, 6}) {
      for (double lr : {0.05, 0.1, 0.3}) {
        GbdtSpec s;
        s.n_rounds = rounds;
        s.max_depth = depth;
        s.learning_rate = lr;
        grid.emplace_back(s);
      }
    }
  }
  return grid;
}

std::vector<ModelSpec> grid_from_json(const json& j) {
  const json& specs = j.is_object() ? j.at("specs") : j;
  if (!specs.is_array()) throw InputError("grid file must be a JSON array of specs");
  std::vector<ModelSpec> grid;
  for (const auto& s : specs) grid.push_back(spec_from_json(s));
  if (grid.empty()) throw InputError("grid file lists no specs");
  return grid;
}

json tuning_report_json(const TuningReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    entries.push_back({{"spec", spec_to_json(e.spec)}, {"validation_auc", e.validation_auc}});
  }
  json best = json::object();
  for (const char* fam : {"logit", "knn", "tree", "random_forest", "adaboost", "gbdt"}) {
    if (auto i = report.best_of_family(fam)) best[fam] = report.entries[*i].validation_auc;
  }
  return {{"count", report.count()},
          {"feature_names", report.feature_names},
          {"chosen", report.chosen},
          {"chosen_spec", spec_to_json(report.chosen_spec())},
          {"best_auc_by_family", best},
          {"entries", entries}};
}

}  // namespace loadshift
