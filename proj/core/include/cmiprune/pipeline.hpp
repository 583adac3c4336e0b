#pragma once

// End-to-end driver: data and model preparation, feature extraction or
// ingestion, ordering, pruning, summarizing, retraining and artifact output.

#include "cmiprune/feature_dump.hpp"
#include "cmiprune/model.hpp"
#include "cmiprune/orchestrator.hpp"
#include "cmiprune/run_config.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace cmiprune {

struct ToyRun {
  LabeledDataset train;
  LabeledDataset test;
  LabeledDataset eval;           // leading slice of train: trial accuracies
  LabeledDataset feature_batch;  // leading slice of train: kernels
  ToyModel model;
};

/// Builds the synthetic splits and loads cfg.model_dir or trains a fresh model.
ToyRun prepare_toy(const RunConfig& cfg);

/// Features of the toy batch written as a dump under output_dir/features.
FeatureDump extract_stage(const RunConfig& cfg, const ToyRun& run);

/// Per-layer CMI orderings (no cross-layer context) of every layer, or of
/// cfg.only_layer; writes curves/layer_<k>.csv.
std::vector<OrderedLayer> order_stage(const RunConfig& cfg, const FeatureDump& dump);

struct PruneOutcome {
  PruningPlan plan;
  PruneReport report;
  std::optional<ToyModel> model;         // toy runs only
  std::optional<ToyModel> pruned_model;  // mask applied in the plan's mode
};

/// Orders, prunes and summarizes; writes plan.json, report.json, report.csv,
/// curves/, run_config.json and (toy runs) model/ and pruned_model/.
PruneOutcome prune_stage(const RunConfig& cfg);
PruneOutcome prune_stage(const RunConfig& cfg, const ToyRun& run);

/// Retrains the pruned model from output_dir, records the post-retraining
/// test accuracy in report.json / report.csv and saves retrained_model/.
PruneReport retrain_stage(const RunConfig& cfg);
PruneReport retrain_stage(const RunConfig& cfg, const ToyRun& run, PruneOutcome& outcome);

/// Re-emits report.csv from plan.json and report.json.
PruneReport report_stage(const std::filesystem::path& output_dir);

}  // namespace cmiprune
