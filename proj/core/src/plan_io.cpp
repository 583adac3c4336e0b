#include "cmiprune/plan_io.hpp"

#include "cmiprune/error.hpp"

#include <json.hpp>

#include <cstdio>
#include <sstream>

namespace cmiprune {

using ojson = nlohmann::ordered_json;

namespace {

ojson cutoff_to_json(const CutoffResult& c) {
  ojson candidates = ojson::array();
  for (const auto& cand : c.candidates) {
    candidates.push_back({{"index", cand.index}, {"accuracy", cand.accuracy}});
  }
  return {
      {"cutoff_index", c.cutoff_index},
      {"candidates", candidates},
      {"evaluated", c.evaluated},
      {"met_target", c.met_target},
      {"fallback", c.fallback},
      {"too_few_values", c.too_few_values},
      {"accuracy", c.accuracy ? ojson(*c.accuracy) : ojson(nullptr)},
      {"clusters", c.clusters},
      {"slopes", c.slopes},
  };
}

CutoffResult cutoff_from_json(const ojson& j, std::vector<int> selected) {
  CutoffResult c;
  c.selected = std::move(selected);
  c.cutoff_index = j.at("cutoff_index").get<int>();
  for (const auto& cand : j.at("candidates")) {
    c.candidates.push_back({cand.at("index").get<int>(), cand.at("accuracy").get<double>()});
  }
  c.evaluated = j.at("evaluated").get<bool>();
  c.met_target = j.at("met_target").get<bool>();
  c.fallback = j.at("fallback").get<bool>();
  c.too_few_values = j.at("too_few_values").get<bool>();
  if (!j.at("accuracy").is_null()) c.accuracy = j.at("accuracy").get<double>();
  c.clusters = j.at("clusters").get<int>();
  c.slopes = j.at("slopes").get<std::vector<double>>();
  return c;
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * fraction);
  return buf;
}

}  // namespace

std::string describe(const PruningPlan& plan) {
  std::string out = plan.direction == Direction::forward ? "Forward pruning" : "Bi-directional pruning";
  switch (plan.strategy) {
    case Strategy::per_layer: out += " & per-layer CMI"; break;
    case Strategy::cross_full: out += " & full CMI"; break;
    case Strategy::cross_compact: out += " & compact CMI"; break;
  }
  out += " (" + std::string(to_string(plan.cutoff)) + ", " + std::string(to_string(plan.mode)) + ")";
  return out;
}

std::string plan_to_json(const PruningPlan& plan) {
  ojson layers = ojson::array();
  for (const auto& lp : plan.layers) {
    layers.push_back({
        {"layer_id", lp.layer_id},
        {"num_filters", lp.num_filters},
        {"stage", lp.stage},
        {"exempt", lp.exempt},
        {"conditioned_on", lp.conditioned_on},
        {"selected", lp.selected},
        {"pruned", lp.pruned},
        {"order", lp.ordered.order},
        {"cmi", lp.ordered.cmi_values},
        {"cutoff", cutoff_to_json(lp.cutoff)},
    });
  }
  const ojson j = {
      {"format_version", 1},
      {"config_hash", plan.config_hash},
      {"strategy", to_string(plan.strategy)},
      {"cutoff", to_string(plan.cutoff)},
      {"direction", to_string(plan.direction)},
      {"mode", to_string(plan.mode)},
      {"alpha", plan.alpha},
      {"full_accuracy", plan.full_accuracy},
      {"target_accuracy", plan.target_accuracy},
      {"evaluator_available", plan.evaluator_available},
      {"start_layer", plan.start_layer},
      {"no_feasible_start", plan.no_feasible_start},
      {"stage1_ratio", plan.stage1_ratio},
      {"stage1_accuracy", plan.stage1_accuracy},
      {"visit_order", plan.visit_order},
      {"layers", layers},
  };
  return j.dump(2) + "\n";
}

PruningPlan plan_from_json(std::string_view text) {
  PruningPlan plan;
  try {
    const ojson j = ojson::parse(text);
    plan.config_hash = j.at("config_hash").get<std::string>();
    plan.strategy = parse_strategy(j.at("strategy").get<std::string>());
    plan.cutoff = parse_cutoff_method(j.at("cutoff").get<std::string>());
    plan.direction = parse_direction(j.at("direction").get<std::string>());
    plan.mode = parse_prune_mode(j.at("mode").get<std::string>());
    plan.alpha = j.at("alpha").get<double>();
    plan.full_accuracy = j.at("full_accuracy").get<double>();
    plan.target_accuracy = j.at("target_accuracy").get<double>();
    plan.evaluator_available = j.at("evaluator_available").get<bool>();
    plan.start_layer = j.at("start_layer").get<int>();
    plan.no_feasible_start = j.at("no_feasible_start").get<bool>();
    plan.stage1_ratio = j.at("stage1_ratio").get<std::vector<double>>();
    plan.stage1_accuracy = j.at("stage1_accuracy").get<std::vector<double>>();
    plan.visit_order = j.at("visit_order").get<std::vector<int>>();
    for (const auto& e : j.at("layers")) {
      LayerPlan lp;
      lp.layer_id = e.at("layer_id").get<int>();
      lp.num_filters = e.at("num_filters").get<int>();
      lp.stage = e.at("stage").get<std::string>();
      lp.exempt = e.at("exempt").get<bool>();
      lp.conditioned_on = e.at("conditioned_on").get<std::vector<int>>();
      lp.selected = e.at("selected").get<std::vector<int>>();
      lp.pruned = e.at("pruned").get<std::vector<int>>();
      lp.ordered.layer_id = lp.layer_id;
      lp.ordered.order = e.at("order").get<std::vector<int>>();
      lp.ordered.cmi_values = e.at("cmi").get<std::vector<double>>();
      lp.cutoff = cutoff_from_json(e.at("cutoff"), lp.selected);
      lp.committed = true;
      require(lp.selected.size() + lp.pruned.size() == static_cast<std::size_t>(lp.num_filters),
              ErrorCode::ConfigInvalid,
              "plan layer " + std::to_string(lp.layer_id) + " does not partition its filters");
      plan.layers.push_back(std::move(lp));
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::ConfigInvalid, std::string("plan: ") + e.what());
  }
  return plan;
}

std::string report_to_json(const PruneReport& report, const PruningPlan& plan) {
  ojson layers = ojson::array();
  for (const auto& row : report.layers) {
    layers.push_back({{"layer_id", row.layer_id},
                      {"filters", row.filters},
                      {"retained", row.retained},
                      {"pruned", row.pruned},
                      {"stage", row.stage},
                      {"met_target", row.met_target},
                      {"fallback", row.fallback},
                      {"exempt", row.exempt}});
  }
  const ojson j = {
      {"format_version", 1},
      {"config_hash", report.config_hash},
      {"algorithm", describe(plan)},
      {"filters_total", report.filters_total},
      {"filters_pruned", report.filters_pruned},
      {"pruned_percent", report.pruned_percent},
      {"parameters_total", report.parameters_total},
      {"parameters_retained", report.parameters_retained},
      {"accuracy_full", report.accuracy_full},
      {"accuracy_before_retrain", report.accuracy_before_retrain},
      {"accuracy_after_retrain",
       report.accuracy_after_retrain ? ojson(*report.accuracy_after_retrain) : ojson(nullptr)},
      {"start_layer", plan.start_layer},
      {"no_feasible_start", plan.no_feasible_start},
      {"layers", layers},
  };
  return j.dump(2) + "\n";
}

PruneReport report_from_json(std::string_view text) {
  PruneReport r;
  try {
    const ojson j = ojson::parse(text);
    r.config_hash = j.at("config_hash").get<std::string>();
    r.filters_total = j.at("filters_total").get<int>();
    r.filters_pruned = j.at("filters_pruned").get<int>();
    r.pruned_percent = j.at("pruned_percent").get<double>();
    r.parameters_total = j.at("parameters_total").get<std::size_t>();
    r.parameters_retained = j.at("parameters_retained").get<std::size_t>();
    r.accuracy_full = j.at("accuracy_full").get<double>();
    r.accuracy_before_retrain = j.at("accuracy_before_retrain").get<double>();
    if (!j.at("accuracy_after_retrain").is_null()) {
      r.accuracy_after_retrain = j.at("accuracy_after_retrain").get<double>();
    }
    for (const auto& e : j.at("layers")) {
      LayerReport row;
      row.layer_id = e.at("layer_id").get<int>();
      row.filters = e.at("filters").get<int>();
      row.retained = e.at("retained").get<int>();
      row.pruned = e.at("pruned").get<int>();
      row.stage = e.at("stage").get<std::string>();
      row.met_target = e.at("met_target").get<bool>();
      row.fallback = e.at("fallback").get<bool>();
      row.exempt = e.at("exempt").get<bool>();
      r.layers.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::ConfigInvalid, std::string("report: ") + e.what());
  }
  return r;
}

std::string report_to_csv(const PruneReport& report, const PruningPlan& plan) {
  std::ostringstream s;
  s << "algorithm,parameters_retained,filters_pruned_percent,accuracy_before_retraining,"
       "accuracy_after_retraining,config_hash\n";
  s << "No pruning (original model)," << report.parameters_total << ",0.00,"
    << percent(report.accuracy_full) << ",," << report.config_hash << "\n";
  s << '"' << describe(plan) << "\"," << report.parameters_retained << ","
    << percent(report.pruned_percent) << "," << percent(report.accuracy_before_retrain) << ",";
  if (report.accuracy_after_retrain) s << percent(*report.accuracy_after_retrain);
  s << "," << report.config_hash << "\n";
  return s.str();
}

std::string curve_to_csv(const OrderedLayer& ordered, const std::string& config_hash) {
  std::ostringstream s;
  if (!config_hash.empty()) s << "# config_hash " << config_hash << "\n";
  s << "rank,feature,cmi\n";
  for (int i = 0; i < ordered.size(); ++i) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", ordered.cmi_values[static_cast<std::size_t>(i)]);
    s << i + 1 << "," << ordered.order[static_cast<std::size_t>(i)] << "," << buf << "\n";
  }
  return s.str();
}

}  // namespace cmiprune
