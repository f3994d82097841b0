#include <chrono>
#include <cmath>
#include <cstring>

#include <Eigen/Dense>

#include "loadshift/explainers.hpp"

namespace loadshift {

using nlohmann::json;

namespace {

std::uint64_t hash_instance(std::span<const double> x) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (double v : x) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    h = mix_seed(h, bits);
  }
  return h;
}

}  // namespace

double LimeResult::predict(std::span<const double> x) const {
  const auto z = stats.apply(x);
  double g = intercept;
  for (std::size_t j = 0; j < z.size(); ++j) g += coefficients[j] * z[j];
  return g;
}

LimeResult lime_explain(const ModelFunction& f, std::span<const double> instance, const Standardization& train_stats,
                        const LimeOptions& options, std::vector<std::string> feature_names) {
  const std::size_t m = instance.size();
  if (m == 0) throw InputError("cannot explain an instance with zero features");
  if (train_stats.mean.size() != m || train_stats.scale.size() != m) {
    throw InputError("standardization stats do not match the instance width");
  }
  if (options.n_perturbations < m + 2) throw InputError("LIME needs at least M + 2 perturbations");
  const double width = options.kernel_width.value_or(0.75 * std::sqrt(static_cast<double>(m)));
  if (!(width > 0)) throw InputError("LIME kernel width must be > 0");

  const auto z0 = train_stats.apply(instance);
  const auto n = static_cast<Eigen::Index>(options.n_perturbations);
  const auto cols = static_cast<Eigen::Index>(m + 1);
  Eigen::MatrixXd design(n, cols);
  Eigen::VectorXd y(n), w(n);
  Rng rng(options.seed);
  std::vector<double> z(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    double d2 = 0;
    design(i, 0) = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double e = rng.normal();
      z[j] = z0[j] + e;
      d2 += e * e;
      design(i, static_cast<Eigen::Index>(j + 1)) = z[j];
    }
    y[i] = f(train_stats.invert(z));
    w[i] = std::exp(-d2 / (width * width));
  }
  if (!(w.sum() > 0)) throw DataError("LIME sample weights vanished; increase the kernel width");

  Eigen::MatrixXd normal = design.transpose() * w.asDiagonal() * design;
  for (Eigen::Index j = 1; j < cols; ++j) normal(j, j) += options.l2_penalty;
  const Eigen::VectorXd rhs = design.transpose() * (w.array() * y.array()).matrix();
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14) {
    throw DataError("LIME surrogate system is degenerate (zero-variance sampling)");
  }
  const Eigen::VectorXd theta = ldlt.solve(rhs);

  LimeResult out;
  out.stats = train_stats;
  out.intercept = theta[0];
  out.coefficients.resize(m);
  out.attribution.base_value = theta[0];
  out.attribution.output_space = OutputSpace::Probability;
  out.attribution.contributions.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    out.coefficients[j] = theta[static_cast<Eigen::Index>(j + 1)];
    out.attribution.contributions[j] = out.coefficients[j] * z0[j];
  }
  if (feature_names.empty()) {
    for (std::size_t j = 0; j < m; ++j) feature_names.push_back("x" + std::to_string(j));
  }
  out.attribution.feature_names = std::move(feature_names);
  return out;
}

std::string_view to_string(ExplainerMethod m) {
  switch (m) {
    case ExplainerMethod::KernelShap:
      return "kernel_shap";
    case ExplainerMethod::TreeShap:
      return "tree_shap";
    case ExplainerMethod::Lime:
      return "lime";
  }
  return "unknown";
}

ExplainerMethod explainer_method_from_string(std::string_view s) {
  if (s == "kernel_shap") return ExplainerMethod::KernelShap;
  if (s == "tree_shap") return ExplainerMethod::TreeShap;
  if (s == "lime") return ExplainerMethod::Lime;
  throw InputError("unknown explainer method '" + std::string(s) + "'");
}

bool method_supports(ExplainerMethod method, const TrainedModel& model) {
  if (method != ExplainerMethod::TreeShap) return true;
  const auto& p = model.parameters();
  return std::holds_alternative<TreeParams>(p) || std::holds_alternative<ForestParams>(p) ||
         std::holds_alternative<GbdtParams>(p) || std::holds_alternative<AdaBoostParams>(p);
}

Explainer make_explainer(ExplainerMethod method, const TrainedModel& model, const BackgroundSet& background,
                         const Standardization& train_stats, const ExplainerSettings& settings) {
  switch (method) {
    case ExplainerMethod::KernelShap:
      return [&model, &background, settings](std::span<const double> x) {
        return kernel_shap(probability_function(model), x, background, settings.kernel_samples,
                           mix_seed(settings.seed, hash_instance(x)), model.feature_names());
      };
    case ExplainerMethod::TreeShap:
      if (!method_supports(method, model)) {
        throw InputError("tree_shap cannot explain " + model.family() + " models");
      }
      return [&model, &background](std::span<const double> x) {
        return tree_shap_interventional(model, x, background);
      };
    case ExplainerMethod::Lime:
      return [&model, &train_stats, settings](std::span<const double> x) {
        LimeOptions opt = settings.lime;
        opt.seed = mix_seed(settings.seed, hash_instance(x));
        return lime_explain(probability_function(model), x, train_stats, opt, model.feature_names()).attribution;
      };
  }
  throw InvariantError("unhandled explainer method");
}

ExplainerReport evaluate_explainer(const Explainer& explainer, const TrainedModel& model,
                                   const std::vector<std::vector<EvalInstance>>& instances_by_day, double cutoff) {
  if (!(cutoff > 0 && cutoff < 1)) throw InputError("cutoff must lie in (0, 1)");
  ExplainerReport report;
  double correct = 0, agree = 0, abs_err = 0, seconds = 0;
  std::vector<double> surrogate;
  for (const auto& day : instances_by_day) {
    if (day.empty()) continue;
    surrogate.clear();
    const auto start = std::chrono::steady_clock::now();
    for (const auto& inst : day) surrogate.push_back(explainer(inst.features).surrogate_probability());
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++report.days;
    for (std::size_t i = 0; i < day.size(); ++i) {
      const double g = surrogate[i];
      const double f = model.predict_proba(day[i].features);
      const bool g_class = classify(g, cutoff);
      correct += g_class == (day[i].label == 1) ? 1 : 0;
      agree += g_class == classify(f, cutoff) ? 1 : 0;
      abs_err += std::abs(g - f);
      ++report.instances;
    }
  }
  if (report.instances == 0) throw InputError("evaluate_explainer needs at least one instance");
  const auto n = static_cast<double>(report.instances);
  report.accuracy = correct / n;
  report.fidelity = agree / n;
  report.maee = abs_err / n;
  report.duration_seconds = seconds / static_cast<double>(report.days);
  return report;
}

json attribution_json(const Attribution& attribution, std::span<const double> instance,
                      std::span<const FeatureGroup> groups) {
  json contributions = json::array();
  for (std::size_t j = 0; j < attribution.contributions.size(); ++j) {
    json c = {{"feature", attribution.feature_names.at(j)}, {"phi", attribution.contributions[j]}};
    c["value"] = j < instance.size() ? json(instance[j]) : json(nullptr);
    c["group"] = j < groups.size() ? json(std::string(to_string(groups[j]))) : json(nullptr);
    contributions.push_back(std::move(c));
  }
  return {{"base_value", attribution.base_value},
          {"output_space", std::string(to_string(attribution.output_space))},
          {"contributions", contributions}};
}

json explainer_report_json(const ExplainerReport& r) {
  return {{"accuracy", r.accuracy}, {"fidelity", r.fidelity}, {"maee", r.maee},
          {"duration", r.duration_seconds}, {"instances", r.instances}, {"days", r.days}};
}

}  // namespace loadshift
