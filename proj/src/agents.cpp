#include "loadshift/agents.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace loadshift {

using nlohmann::json;

namespace {

std::string join_names(const std::vector<RankedFeature>& features) {
  if (features.empty()) return {};
  if (features.size() == 1) return features[0].name;
  return features[0].name + " and " + features[1].name;
}

std::vector<RankedFeature> ranked(const Attribution& attr, std::span<const FeatureGroup> groups, FeatureGroup group) {
  std::vector<RankedFeature> out;
  for (std::size_t j : top_features(attr.contributions, groups, group)) {
    out.push_back({j, feature_display_name(attr.feature_names.at(j)), attr.contributions[j], group});
  }
  return out;
}

bool all_zero(const Attribution& attr) {
  return std::all_of(attr.contributions.begin(), attr.contributions.end(), [](double v) { return v == 0.0; });
}

ExplanationPart make_part(const Attribution& attr, std::span<const double> instance, std::span<const FeatureGroup> groups) {
  if (attr.contributions.empty()) throw InputError("cannot explain an empty attribution");
  if (groups.size() != attr.contributions.size()) {
    throw InputError("feature groups do not match the attribution width");
  }
  ExplanationPart part;
  part.attribution = attr;
  part.instance.assign(instance.begin(), instance.end());
  part.non_weather = ranked(attr, groups, FeatureGroup::NonWeather);
  part.weather = ranked(attr, groups, FeatureGroup::Weather);
  return part;
}

std::vector<FeatureGroup> groups_of(const TrainedModel& model) {
  std::vector<FeatureGroup> groups;
  for (const auto& n : model.feature_names()) groups.push_back(feature_group_of(n));
  return groups;
}

// Tree SHAP needs a tree ensemble; other families fall back to Kernel SHAP.
ExplainerMethod method_for(ExplainerMethod requested, const TrainedModel& model) {
  if (requested == ExplainerMethod::TreeShap && !method_supports(requested, model)) return ExplainerMethod::KernelShap;
  return requested;
}

template <class F>
auto run_stage(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, e.what());
  }
}

}  // namespace

std::vector<std::vector<double>> extract_cycles(const HourlyTable& table, std::size_t device, double active_watts,
                                                Timestamp from, Timestamp to) {
  if (device >= table.device_names.size()) throw InputError("device index out of range");
  std::vector<std::vector<double>> cycles;
  std::vector<double> current;
  for (const auto& row : table.rows) {
    if (row.time < from) continue;
    if (row.time >= to) break;
    const double load = row.device_loads[device];
    if (load >= active_watts) {
      current.push_back(load);
    } else if (!current.empty()) {
      cycles.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) cycles.push_back(std::move(current));
  return cycles;
}

TypicalLoadProfile profile_from_cycles(std::size_t device, const std::vector<std::vector<double>>& cycles) {
  if (cycles.empty()) throw DataError("no usage cycles observed for device " + std::to_string(device));
  std::vector<std::size_t> lengths;
  for (const auto& c : cycles) lengths.push_back(c.size());
  std::sort(lengths.begin(), lengths.end());
  const std::size_t d = lengths[(lengths.size() - 1) / 2];

  TypicalLoadProfile p;
  p.device_id = device;
  p.duration_hours = static_cast<int>(d);
  p.cycles_observed = cycles.size();
  p.hourly_load.assign(d, 0.0);
  for (const auto& c : cycles) {
    for (std::size_t i = 0; i < d && i < c.size(); ++i) p.hourly_load[i] += c[i];
  }
  for (auto& v : p.hourly_load) v /= static_cast<double>(cycles.size());
  return p;
}

TypicalLoadProfile load_agent_profile(const HourlyTable& table, std::size_t device, double active_watts,
                                      Timestamp history_end) {
  if (!(active_watts > 0)) throw InputError("active_watts must be > 0");
  const Timestamp from = table.empty() ? 0 : table.start();
  return profile_from_cycles(device, extract_cycles(table, device, active_watts, from, history_end));
}

DayProbabilities availability_agent_predict(const ModelFunction& model, const HourlyTable& table,
                                            std::span<const int> labels, Timestamp date) {
  if (date != floor_day(date)) throw InputError("prediction date must be UTC midnight");
  DayProbabilities out{};
  for (int h = 0; h < kHoursPerDay; ++h) {
    const auto x = availability_features(table, labels, date + h * kSecondsPerHour);
    out[static_cast<std::size_t>(h)] = model(x);
  }
  return out;
}

std::vector<double> usage_agent_predict(const std::vector<UsageModelBinding>& models, const HourlyTable& table,
                                        Timestamp date) {
  std::vector<double> out;
  out.reserve(models.size());
  for (const auto& m : models) out.push_back(m.model(usage_features(table, m.labels, date)));
  return out;
}

std::string_view to_string(RecommendationStatus s) {
  switch (s) {
    case RecommendationStatus::Recommended:
      return "recommended";
    case RecommendationStatus::LowUsage:
      return "low_usage";
    case RecommendationStatus::NoAvailableHour:
      return "no_available_hour";
  }
  return "unknown";
}

double run_cost(std::span<const double> prices, const TypicalLoadProfile& profile, int start_hour, bool price_only) {
  double cost = 0;
  for (int i = 0; i < profile.duration_hours; ++i) {
    const double price = prices[static_cast<std::size_t>(start_hour + i)];
    cost += price_only ? price : price * profile.hourly_load[static_cast<std::size_t>(i)] / 1000.0;
  }
  return cost;
}

std::vector<Recommendation> recommend(const DayPrediction& prediction, const std::vector<TypicalLoadProfile>& profiles,
                                      std::span<const double> prices_24h, const Thresholds& thresholds,
                                      const std::vector<std::string>& device_names) {
  if (prices_24h.size() != static_cast<std::size_t>(kHoursPerDay)) {
    throw InputError("recommendation needs exactly 24 hourly prices");
  }
  for (double p : prices_24h) {
    if (!std::isfinite(p)) throw InputError("non-finite price in recommendation horizon");
  }
  if (!(thresholds.usage > 0 && thresholds.usage < 1 && thresholds.availability > 0 && thresholds.availability < 1)) {
    throw InputError("thresholds must lie in (0, 1)");
  }
  if (prediction.devices.size() != prediction.usage.size()) {
    throw InvariantError("usage probabilities do not match the device list");
  }

  std::vector<Recommendation> out;
  for (std::size_t k = 0; k < prediction.devices.size(); ++k) {
    Recommendation rec;
    rec.device = prediction.devices[k];
    rec.device_name = k < device_names.size() ? device_names[k] : "device " + std::to_string(rec.device);
    rec.usage_prob = prediction.usage[k];
    if (rec.usage_prob < thresholds.usage) {
      rec.status = RecommendationStatus::LowUsage;
      out.push_back(std::move(rec));
      continue;
    }
    const auto it = std::find_if(profiles.begin(), profiles.end(),
                                 [&](const TypicalLoadProfile& p) { return p.device_id == rec.device; });
    if (it == profiles.end()) {
      throw DataError("no load profile for device " + rec.device_name);
    }
    const TypicalLoadProfile& profile = *it;

    rec.status = RecommendationStatus::NoAvailableHour;
    for (int h = 0; h + profile.duration_hours <= kHoursPerDay; ++h) {
      const int last = thresholds.strict_availability ? h + profile.duration_hours : h + 1;
      bool available = true;
      for (int i = h; i < last; ++i) {
        available = available && prediction.availability[static_cast<std::size_t>(i)] >= thresholds.availability;
      }
      if (!available) continue;
      const double cost = run_cost(prices_24h, profile, h, thresholds.price_only);
      if (!rec.recommended() || cost < rec.estimated_cost) {
        rec.status = RecommendationStatus::Recommended;
        rec.start_hour = h;
        rec.estimated_cost = cost;
        rec.availability_prob_at_start = prediction.availability[static_cast<std::size_t>(h)];
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::size_t> top_features(std::span<const double> phi, std::span<const FeatureGroup> groups,
                                      FeatureGroup group, std::size_t k) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < phi.size(); ++j) {
    if (groups[j] == group) idx.push_back(j);
  }
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(phi[a]) > std::abs(phi[b]); });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

ExplanationPart usage_explanation(const std::string& device_name, const Attribution& attribution,
                                  std::span<const double> instance, std::span<const FeatureGroup> groups) {
  ExplanationPart part = make_part(attribution, instance, groups);
  std::string text = "We recommend using the " + device_name + " today.";
  if (all_zero(attribution)) {
    part.text = text + " No single feature stood out as a driver of this prediction.";
    return part;
  }
  double weather_phi = 0;
  for (const auto& f : part.weather) weather_phi += f.phi;
  const std::string direction = weather_phi > 0 ? "increased" : "decreased";
  const std::string nw = join_names(part.non_weather);
  const std::string w = join_names(part.weather);
  if (!nw.empty() && !w.empty()) {
    text += " The prediction was mainly driven by " + nw + "; the weather conditions " + w + " also " + direction +
            " the likelihood.";
  } else if (!nw.empty()) {
    text += " The prediction was mainly driven by " + nw + ".";
  } else {
    text += " The prediction was mainly driven by the weather conditions " + w + ", which " + direction +
            " the likelihood.";
  }
  part.text = std::move(text);
  return part;
}

ExplanationPart availability_explanation(int hour, const Attribution& attribution, std::span<const double> instance,
                                         std::span<const FeatureGroup> groups) {
  ExplanationPart part = make_part(attribution, instance, groups);
  const std::string head = "Hour " + std::to_string(hour) + ":00 was chosen because you are likely available then";
  if (all_zero(attribution)) {
    part.text = head + "; no single feature stood out as a driver of this prediction.";
    return part;
  }
  const std::string nw = join_names(part.non_weather);
  const std::string w = join_names(part.weather);
  if (!nw.empty() && !w.empty()) {
    part.text = head + ", mainly due to " + nw + "; weather features " + w + " also contributed.";
  } else if (!nw.empty()) {
    part.text = head + ", mainly due to " + nw + ".";
  } else {
    part.text = head + ", mainly due to the weather features " + w + ".";
  }
  return part;
}

void explain_recommendation(Recommendation& rec, const Attribution& usage_attr, std::span<const double> usage_instance,
                            std::span<const FeatureGroup> usage_groups, const Attribution& availability_attr,
                            std::span<const double> availability_instance,
                            std::span<const FeatureGroup> availability_groups) {
  if (!rec.recommended()) throw InvariantError("only recommended devices carry explanations");
  rec.usage_explanation = usage_explanation(rec.device_name, usage_attr, usage_instance, usage_groups);
  rec.availability_explanation =
      availability_explanation(rec.start_hour, availability_attr, availability_instance, availability_groups);
}

std::array<double, kHoursPerDay> day_prices(const HourlyTable& table, Timestamp date) {
  std::array<double, kHoursPerDay> prices{};
  for (int h = 0; h < kHoursPerDay; ++h) {
    const auto idx = table.index_of(date + h * kSecondsPerHour);
    if (!idx || !table.rows[*idx].price) {
      throw DataError("no price for " + format_iso_utc(date + h * kSecondsPerHour));
    }
    prices[static_cast<std::size_t>(h)] = *table.rows[*idx].price;
  }
  return prices;
}

std::string slugify(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (out.empty() || out.back() != '_') {
      out.push_back('_');
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "device" : out;
}

DailyResult run_daily_pipeline(const HouseholdState& state, Timestamp date, const PipelineConfig& config) {
  if (date != floor_day(date)) throw PipelineError("price", "date must be UTC midnight");
  DailyResult result;
  result.date = date;
  const HourlyTable& table = state.table;

  result.prices = run_stage("price", [&] { return day_prices(table, date); });

  result.prediction.date = date;
  result.prediction.availability = run_stage("availability", [&] {
    return availability_agent_predict(probability_function(state.availability.model), table,
                                      state.availability_labels.labels, date);
  });

  run_stage("usage", [&] {
    std::vector<UsageModelBinding> bindings;
    for (const auto& d : state.devices) {
      bindings.push_back({d.device, probability_function(d.usage.model), d.labels});
      result.prediction.devices.push_back(d.device);
    }
    result.prediction.usage = usage_agent_predict(bindings, table, date);
    return 0;
  });

  run_stage("load", [&] {
    for (const auto& d : state.devices) {
      const auto cycles = extract_cycles(table, d.device, config.active_watts, table.start(), date);
      if (!cycles.empty()) result.profiles.push_back(profile_from_cycles(d.device, cycles));
    }
    return 0;
  });

  std::vector<std::string> names;
  for (const auto& d : state.devices) names.push_back(d.name);
  result.items = run_stage("recommendation", [&] {
    return recommend(result.prediction, result.profiles, result.prices, config.thresholds, names);
  });

  run_stage("explainability", [&] {
    const auto& avail = state.availability;
    const Explainer avail_explainer =
        make_explainer(method_for(config.method, avail.model), avail.model, avail.background, avail.stats,
                       config.explainer);
    for (std::size_t k = 0; k < result.items.size(); ++k) {
      Recommendation& rec = result.items[k];
      if (!rec.recommended()) continue;
      const DeviceState& dev = state.devices[k];
      const Explainer usage_explainer =
          make_explainer(method_for(config.method, dev.usage.model), dev.usage.model, dev.usage.background,
                         dev.usage.stats, config.explainer);
      const auto usage_x = usage_features(table, dev.labels, date);
      const auto avail_x =
          availability_features(table, state.availability_labels.labels, date + rec.start_hour * kSecondsPerHour);
      explain_recommendation(rec, usage_explainer(usage_x), usage_x, groups_of(dev.usage.model),
                             avail_explainer(avail_x), avail_x, groups_of(avail.model));
      const std::string slug = slugify(rec.device_name);
      result.artifacts[slug + "_usage.txt"] = rec.usage_explanation->text + "\n";
      result.artifacts[slug + "_availability.txt"] = rec.availability_explanation->text + "\n";
      result.artifacts[slug + "_usage.svg"] =
          attribution_svg(rec.usage_explanation->attribution, "Usage of the " + rec.device_name);
      result.artifacts[slug + "_availability.svg"] = attribution_svg(
          rec.availability_explanation->attribution, "Availability at " + std::to_string(rec.start_hour) + ":00");
    }
    return 0;
  });
  return result;
}

json recommendation_json(const DailyResult& result, const std::string& household, int daily_run_hour) {
  auto part_json = [](const std::optional<ExplanationPart>& part) -> json {
    if (!part) return nullptr;
    json top = json::object();
    for (const auto* group : {&part->non_weather, &part->weather}) {
      json list = json::array();
      for (const auto& f : *group) {
        list.push_back({{"feature", part->attribution.feature_names.at(f.index)}, {"phi", f.phi}});
      }
      top[group == &part->weather ? "weather" : "non_weather"] = list;
    }
    std::vector<FeatureGroup> groups;
    for (const auto& n : part->attribution.feature_names) groups.push_back(feature_group_of(n));
    return {{"text", part->text},
            {"top_features", top},
            {"attribution", attribution_json(part->attribution, part->instance, groups)}};
  };

  json items = json::array();
  for (const auto& rec : result.items) {
    json item = {{"device", rec.device_name},
                 {"device_id", rec.device},
                 {"status", rec.recommended() ? "recommended" : "no_recommendation"},
                 {"usage_prob", rec.usage_prob}};
    if (rec.recommended()) {
      item["start_hour"] = rec.start_hour;
      item["cost"] = rec.estimated_cost;
      item["availability_prob"] = rec.availability_prob_at_start;
      item["explanations"] = {{"usage", part_json(rec.usage_explanation)},
                              {"availability", part_json(rec.availability_explanation)}};
    } else {
      item["reason"] = std::string(to_string(rec.status));
      item["start_hour"] = nullptr;
      item["cost"] = nullptr;
      item["availability_prob"] = nullptr;
      item["explanations"] = nullptr;
    }
    items.push_back(std::move(item));
  }
  return {{"date", format_date_utc(result.date)},
          {"household", household},
          {"issued_at_hour", daily_run_hour},
          {"availability_probs", result.prediction.availability},
          {"prices", result.prices},
          {"items", items}};
}

}  // namespace loadshift
