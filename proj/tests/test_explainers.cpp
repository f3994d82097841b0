#include <chrono>
#include <set>

#include "doctest.h"
#include "test_support.hpp"

using namespace loadshift;

namespace {

BackgroundSet random_background(std::size_t rows, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  BackgroundSet bg;
  bg.seed = seed;
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<double> r(width);
    for (auto& v : r) v = rng.normal();
    bg.rows.push_back(r);
  }
  return bg;
}

std::vector<double> random_point(std::size_t width, Rng& rng) {
  std::vector<double> x(width);
  for (auto& v : x) v = rng.normal() * 1.5;
  return x;
}

TrainedModel constant_logit(double p, std::size_t width = 1) {
  LogitParams lp;
  lp.standardization.mean.assign(width, 0.0);
  lp.standardization.scale.assign(width, 1.0);
  lp.weights.assign(width, 0.0);
  lp.intercept = logit(p);
  std::vector<std::string> names;
  for (std::size_t j = 0; j < width; ++j) names.push_back("x" + std::to_string(j));
  return TrainedModel(LogitSpec{}, lp, names);
}

double sum(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

// Dense solve with partial pivoting; small systems only.
std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[p][c])) p = r;
    }
    std::swap(a[c], a[p]);
    std::swap(b[c], b[p]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

}  // namespace

TEST_CASE("kernel shap on a constant model") {
  const ModelFunction f = [](std::span<const double>) { return 0.37; };
  const auto bg = random_background(10, 4, 1);
  const std::vector<double> x = {1, 2, 3, 4};
  const auto a = kernel_shap(f, x, bg, 100, 1);
  CHECK(a.base_value == doctest::Approx(0.37).epsilon(1e-15));
  for (double phi : a.contributions) CHECK(std::abs(phi) < 1e-12);
  CHECK(a.output_space == OutputSpace::Probability);
  CHECK(a.feature_names.size() == 4);
}

TEST_CASE("kernel shap on an additive model matches the permutation oracle") {
  const ModelFunction f = [](std::span<const double> z) { return z[0] + z[1]; };
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto bg = random_background(7, 3, 10 + static_cast<std::uint64_t>(trial));
    const auto x = random_point(3, rng);
    const auto a = kernel_shap(f, x, bg, 0, 0);
    const auto oracle = testing::shapley_by_permutations(f, x, bg.rows);
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0;
      for (const auto& r : bg.rows) mean += r[j];
      mean /= static_cast<double>(bg.rows.size());
      const double expected = j < 2 ? x[j] - mean : 0.0;
      CHECK(oracle[j] == doctest::Approx(expected).epsilon(1e-12));
      CHECK(std::abs(a.contributions[j] - oracle[j]) <= 1e-9);
    }
    CHECK(std::abs(a.base_value + sum(a.contributions) - f(x)) <= 1e-9);
  }
}

TEST_CASE("kernel shap exact mode equals the oracle for M <= 8") {
  const auto m = testing::random_matrix(200, 8, 5);
  ForestSpec fs;
  fs.n_trees = 10;
  fs.max_depth = 4;
  const auto model = fit_classifier(fs, m, 1);
  const auto f = probability_function(model);
  Rng rng(8);
  for (std::size_t width : {1u, 3u, 6u, 8u}) {
    const auto bg = random_background(12, width, width);
    const ModelFunction g = [&](std::span<const double> z) {
      std::vector<double> full(8, 0.3);
      std::copy(z.begin(), z.end(), full.begin());
      return f(full);
    };
    const auto x = random_point(width, rng);
    const auto k = kernel_shap(g, x, bg, 0, 0);
    const auto o = exact_shapley_oracle(g, x, bg);
    CHECK(k.base_value == doctest::Approx(o.base_value).epsilon(1e-12));
    for (std::size_t j = 0; j < width; ++j) CHECK(std::abs(k.contributions[j] - o.contributions[j]) <= 1e-6);
  }
}

TEST_CASE("kernel shap with background rows that share instance values") {
  const auto m = testing::random_matrix(200, 6, 9);
  const auto model = fit_classifier(KnnSpec{5, true}, m, 0);
  const auto f = probability_function(model);
  Rng rng(12);
  const auto x = random_point(6, rng);
  auto bg = random_background(8, 6, 4);
  for (std::size_t i = 0; i < bg.rows.size(); ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      if ((i + j) % 3 == 0) bg.rows[i][j] = x[j];
    }
  }
  bg.rows[0] = x;
  const auto k = kernel_shap(f, x, bg, 0, 0);
  const auto perm = testing::shapley_by_permutations(f, x, bg.rows);
  for (std::size_t j = 0; j < 6; ++j) CHECK(std::abs(k.contributions[j] - perm[j]) <= 1e-9);
  CHECK(k.base_value == doctest::Approx(testing::masked_value(f, x, bg.rows, std::vector<bool>(6, false))).epsilon(1e-15));
}

TEST_CASE("kernel shap sampling mode keeps local accuracy") {
  const std::size_t width = 14;
  const ModelFunction f = [](std::span<const double> z) {
    double s = 0;
    for (std::size_t j = 0; j < z.size(); ++j) s += 0.1 * static_cast<double>(j) * z[j];
    return s;
  };
  const auto bg = random_background(5, width, 2);
  Rng rng(4);
  const auto x = random_point(width, rng);
  const auto a = kernel_shap(f, x, bg, 4000, 9);
  CHECK(std::abs(a.base_value + sum(a.contributions) - f(x)) <= 1e-9);
  for (std::size_t j = 0; j < width; ++j) {
    double mean = 0;
    for (const auto& r : bg.rows) mean += r[j];
    mean /= static_cast<double>(bg.rows.size());
    CHECK(a.contributions[j] == doctest::Approx(0.1 * static_cast<double>(j) * (x[j] - mean)).epsilon(1e-6));
  }
  const auto again = kernel_shap(f, x, bg, 4000, 9);
  CHECK(again.contributions == a.contributions);
  CHECK_THROWS_AS(kernel_shap(f, x, bg, 0, 9), InputError);
}

TEST_CASE("kernel shap input checks") {
  const ModelFunction f = [](std::span<const double>) { return 0.0; };
  CHECK_THROWS_AS(kernel_shap(f, std::vector<double>{}, random_background(3, 0, 1), 10, 1), InputError);
  CHECK_THROWS_AS(kernel_shap(f, std::vector<double>{1.0}, BackgroundSet{}, 10, 1), InputError);
}

TEST_CASE("tree shap gives dummy features exactly zero") {
  DecisionTree t;
  t.nodes = {{0, 0.5, 1, 2, 0}, {-1, 0, -1, -1, 0.2}, {-1, 0, -1, -1, 0.9}};
  const TrainedModel model(TreeSpec{1, 1}, TreeParams{t}, {"x1", "x2"});
  const auto bg = random_background(16, 2, 3);
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_point(2, rng);
    const auto a = tree_shap_interventional(model, x, bg);
    CHECK(a.contributions[1] == 0.0);
    CHECK(std::abs(a.base_value + sum(a.contributions) - model.predict_proba(x)) <= 1e-12);
  }
}

TEST_CASE("tree shap matches brute force on depth-3 trees") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto m = testing::random_matrix(150, 4, seed);
    const auto model = fit_classifier(TreeSpec{3, 3}, m, seed);
    const auto bg = random_background(16, 4, seed + 100);
    Rng rng(seed);
    const auto x = random_point(4, rng);
    const auto a = tree_shap_interventional(model, x, bg);
    const auto oracle = testing::shapley_by_permutations(probability_function(model), x, bg.rows);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(a.contributions[j] - oracle[j]) <= 1e-9);
    CHECK(std::abs(a.base_value + sum(a.contributions) - model.predict_proba(x)) <= 1e-9);
  }
}

TEST_CASE("tree shap on gbdt works in log-odds") {
  const auto m = testing::random_matrix(200, 5, 7);
  GbdtSpec g;
  g.n_rounds = 20;
  const auto model = fit_classifier(g, m, 0);
  const auto bg = random_background(10, 5, 2);
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    const auto x = random_point(5, rng);
    const auto a = tree_shap_interventional(model, x, bg);
    CHECK(a.output_space == OutputSpace::LogOdds);
    CHECK(std::abs(a.base_value + sum(a.contributions) - model.predict_native(x)) <= 1e-9);
    CHECK(std::abs(a.surrogate_probability() - model.predict_proba(x)) <= 1e-9);
    const auto o = exact_shapley_oracle(native_function(model), x, bg);
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(a.contributions[j] - o.contributions[j]) <= 1e-9);
  }
  CHECK_THROWS_AS(tree_shap_interventional(fit_classifier(LogitSpec{}, m, 0), m.rows[0].features, bg), InputError);
}

TEST_CASE("tree shap on adaboost matches brute force") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto m = testing::random_matrix(200, 5, seed + 20);
    AdaBoostSpec spec;
    spec.n_rounds = 15;
    const auto model = fit_classifier(spec, m, seed);
    const auto bg = random_background(12, 5, seed);
    Rng rng(seed + 1);
    const auto x = random_point(5, rng);
    const auto a = tree_shap_interventional(model, x, bg);
    CHECK(a.output_space == OutputSpace::Probability);
    const auto oracle = testing::shapley_by_permutations(probability_function(model), x, bg.rows);
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(a.contributions[j] - oracle[j]) <= 1e-9);
    CHECK(std::abs(a.base_value + sum(a.contributions) - model.predict_proba(x)) <= 1e-9);
  }
}

TEST_CASE("exact oracle axioms") {
  const auto bg = random_background(9, 1, 4);
  const ModelFunction f1 = [](std::span<const double> z) { return z[0] * z[0]; };
  const std::vector<double> x1 = {1.7};
  const auto a = exact_shapley_oracle(f1, x1, bg);
  CHECK(a.contributions[0] == doctest::Approx(f1(x1) - a.base_value).epsilon(1e-14));

  const ModelFunction sym = [](std::span<const double> z) { return z[0] * z[1] + z[2]; };
  auto bg3 = random_background(6, 3, 5);
  for (auto& r : bg3.rows) r[1] = r[0];
  const std::vector<double> x3 = {0.8, 0.8, -1.0};
  const auto s = exact_shapley_oracle(sym, x3, bg3);
  CHECK(s.contributions[0] == doctest::Approx(s.contributions[1]).epsilon(1e-14));

  CHECK_THROWS_AS(exact_shapley_oracle(f1, std::vector<double>(16, 0.0), random_background(2, 16, 1)), InputError);
}

TEST_CASE("tree shap runtime grows linearly with the background") {
  const auto m = testing::random_matrix(400, 8, 3);
  ForestSpec fs;
  fs.n_trees = 40;
  const auto model = fit_classifier(fs, m, 2);
  const auto small = random_background(25, 8, 1);
  const auto large = random_background(100, 8, 1);
  Rng rng(1);
  const auto x = random_point(8, rng);
  auto time_of = [&](const BackgroundSet& bg) {
    std::vector<double> runs;
    for (int rep = 0; rep < 5; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < 5; ++i) (void)tree_shap_interventional(model, x, bg);
      runs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    std::sort(runs.begin(), runs.end());
    return runs[2];
  };
  const double ratio = time_of(large) / time_of(small);
  CHECK(ratio >= 4.0 / 3.0);
  CHECK(ratio <= 12.0);
}

TEST_CASE("lime on a constant model") {
  const ModelFunction f = [](std::span<const double>) { return 0.42; };
  Standardization st{{0, 0, 0}, {1, 1, 1}};
  LimeOptions opt;
  opt.seed = 3;
  const auto r = lime_explain(f, std::vector<double>{0.5, -1, 2}, st, opt);
  CHECK(std::abs(r.intercept - 0.42) < 1e-3);
  for (double c : r.coefficients) CHECK(std::abs(c) < 1e-3);
}

TEST_CASE("lime recovers a linear model and matches weighted least squares") {
  const Standardization st{{10, -2, 0.5}, {2, 0.5, 4}};
  const std::vector<double> beta = {0.3, -0.7, 0.05};
  const ModelFunction f = [&](std::span<const double> x) {
    const auto z = st.apply(x);
    return 0.2 + beta[0] * z[0] + beta[1] * z[1] + beta[2] * z[2];
  };
  const std::vector<double> x = {11, -2.5, 1.5};
  LimeOptions opt;
  opt.n_perturbations = 5000;
  opt.seed = 17;
  const auto r = lime_explain(f, x, st, opt);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(std::abs(r.coefficients[j] - beta[j]) <= 0.05 * std::abs(beta[j]));
  }

  // Same sample regenerated from the documented draw order, solved directly.
  const auto z0 = st.apply(x);
  const double width = 0.75 * std::sqrt(3.0);
  Rng rng(opt.seed);
  std::vector<std::vector<double>> a(4, std::vector<double>(4, 0.0));
  std::vector<double> b(4, 0.0);
  for (std::size_t i = 0; i < opt.n_perturbations; ++i) {
    std::vector<double> row = {1.0, 0, 0, 0};
    double d2 = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double e = rng.normal();
      row[j + 1] = z0[j] + e;
      d2 += e * e;
    }
    const double y = f(st.invert(std::vector<double>(row.begin() + 1, row.end())));
    const double w = std::exp(-d2 / (width * width));
    for (std::size_t p = 0; p < 4; ++p) {
      for (std::size_t q = 0; q < 4; ++q) a[p][q] += w * row[p] * row[q];
      b[p] += w * row[p] * y;
    }
  }
  for (std::size_t j = 1; j < 4; ++j) a[j][j] += opt.l2_penalty;
  const auto theta = solve(a, b);
  CHECK(r.intercept == doctest::Approx(theta[0]).epsilon(1e-8));
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(r.coefficients[j] == doctest::Approx(theta[j + 1]).epsilon(1e-8));
    CHECK(r.attribution.contributions[j] == doctest::Approx(theta[j + 1] * z0[j]).epsilon(1e-8));
  }
  CHECK(r.predict(x) == doctest::Approx(r.attribution.surrogate_output()).epsilon(1e-12));
}

TEST_CASE("lime is deterministic and validates input") {
  const auto m = testing::random_matrix(100, 4, 1);
  const auto model = fit_classifier(LogitSpec{}, m, 0);
  const auto st = Standardization::fit(m);
  LimeOptions opt;
  opt.seed = 5;
  const auto a = lime_explain(probability_function(model), m.rows[0].features, st, opt);
  const auto b = lime_explain(probability_function(model), m.rows[0].features, st, opt);
  CHECK(a.attribution.contributions == b.attribution.contributions);
  CHECK(a.intercept == b.intercept);
  opt.n_perturbations = 5;
  CHECK_THROWS_AS(lime_explain(probability_function(model), m.rows[0].features, st, opt), InputError);
  opt.n_perturbations = 100;
  opt.kernel_width = 1e-6;
  CHECK_THROWS_AS(lime_explain(probability_function(model), m.rows[0].features, st, opt), DataError);
}

TEST_CASE("evaluate_explainer formulas") {
  const auto model = constant_logit(0.6);
  SUBCASE("surrogate below cutoff, model above") {
    const Explainer ex = [](std::span<const double>) {
      Attribution a;
      a.base_value = 0.4;
      a.contributions = {0.0};
      a.feature_names = {"x0"};
      return a;
    };
    const auto r = evaluate_explainer(ex, model, {{{{1.0}, 1}}});
    CHECK(r.fidelity == 0.0);
    CHECK(r.accuracy == 0.0);
    CHECK(r.maee == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(r.instances == 1);
    CHECK(r.days == 1);
  }
  SUBCASE("surrogate equal to the model") {
    const Explainer ex = [&](std::span<const double> x) {
      Attribution a;
      a.base_value = model.predict_proba(x);
      a.contributions = {0.0};
      return a;
    };
    const auto r = evaluate_explainer(ex, model, {{{{1.0}, 1}, {{2.0}, 0}}, {{{3.0}, 1}}});
    CHECK(r.fidelity == 1.0);
    CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));
    CHECK(r.maee == 0.0);
    CHECK(r.days == 2);
    CHECK(r.duration_seconds >= 0.0);
  }
  const Explainer none = [](std::span<const double>) { return Attribution{}; };
  CHECK_THROWS_AS(evaluate_explainer(none, model, {}), InputError);
  CHECK_THROWS_AS(evaluate_explainer(none, model, {{{{1.0}, 1}}}, 1.0), InputError);
}

TEST_CASE("make_explainer routes methods") {
  const auto m = testing::random_matrix(150, 4, 2);
  const auto logit_model = fit_classifier(LogitSpec{}, m, 0);
  const auto bg = sample_background(m, 20, 1);
  CHECK(bg.rows.size() == 20);
  const auto st = Standardization::fit(m);
  ExplainerSettings settings;
  CHECK_THROWS_AS(make_explainer(ExplainerMethod::TreeShap, logit_model, bg, st, settings), InputError);
  CHECK_FALSE(method_supports(ExplainerMethod::TreeShap, logit_model));
  CHECK(method_supports(ExplainerMethod::Lime, logit_model));
  const auto lime = make_explainer(ExplainerMethod::Lime, logit_model, bg, st, settings);
  CHECK(lime(m.rows[3].features).contributions == lime(m.rows[3].features).contributions);
  CHECK(explainer_method_from_string("kernel_shap") == ExplainerMethod::KernelShap);
  CHECK_THROWS_AS(explainer_method_from_string("anchors"), InputError);
  CHECK(sample_background(m, 1000, 1).rows.size() == m.size());
}

TEST_CASE("attribution json layout") {
  Attribution a;
  a.base_value = 0.1;
  a.contributions = {0.2, -0.3};
  a.feature_names = {"hour_sin", "temperature"};
  const std::vector<FeatureGroup> groups = {FeatureGroup::NonWeather, FeatureGroup::Weather};
  const auto j = attribution_json(a, std::vector<double>{1.0, 2.0}, groups);
  CHECK(j["base_value"] == 0.1);
  CHECK(j["output_space"] == "probability");
  REQUIRE(j["contributions"].size() == 2);
  CHECK(j["contributions"][1]["feature"] == "temperature");
  CHECK(j["contributions"][1]["group"] == "weather");
  CHECK(j["contributions"][1]["value"] == 2.0);
  CHECK(j["contributions"][0]["phi"] == 0.2);
}
