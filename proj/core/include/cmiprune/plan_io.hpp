#pragma once

#include "cmiprune/orchestrator.hpp"

#include <string>
#include <string_view>

namespace cmiprune {

/// Deterministic JSON: fixed key order, shortest round-trip doubles.
std::string plan_to_json(const PruningPlan& plan);
PruningPlan plan_from_json(std::string_view text);

std::string report_to_json(const PruneReport& report, const PruningPlan& plan);
PruneReport report_from_json(std::string_view text);

/// One "No pruning" row and one row for the run, with the usual columns:
/// parameters retained, filters pruned percentage, accuracy before and after
/// retraining.
std::string report_to_csv(const PruneReport& report, const PruningPlan& plan);

/// rank,cmi rows of one ordered layer (rank starts at 1).
std::string curve_to_csv(const OrderedLayer& ordered, const std::string& config_hash = {});

/// "Bi-directional pruning & compact CMI" style label.
std::string describe(const PruningPlan& plan);

}  // namespace cmiprune
