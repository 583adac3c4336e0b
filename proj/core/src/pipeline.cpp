#include "cmiprune/pipeline.hpp"

#include "cmiprune/error.hpp"
#include "cmiprune/model_io.hpp"
#include "cmiprune/npy.hpp"
#include "cmiprune/plan_io.hpp"

#include <spdlog/spdlog.h>

namespace cmiprune {

namespace fs = std::filesystem;

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
  return seed * 0x9E3779B97F4A7C15ULL + tag;
}

void write_curves(const fs::path& dir, const std::vector<OrderedLayer>& layers,
                  const std::string& hash) {
  for (const auto& ordered : layers) {
    write_file_atomic(dir / ("layer_" + std::to_string(ordered.layer_id) + ".csv"),
                      curve_to_csv(ordered, hash));
  }
}

void write_outputs(const RunConfig& cfg, const PruneOutcome& out) {
  const fs::path& dir = cfg.output_dir;
  write_file_atomic(dir / "run_config.json", to_json(cfg));
  write_file_atomic(dir / "plan.json", plan_to_json(out.plan));
  write_file_atomic(dir / "report.json", report_to_json(out.report, out.plan));
  write_file_atomic(dir / "report.csv", report_to_csv(out.report, out.plan));
  std::vector<OrderedLayer> curves;
  for (const auto& lp : out.plan.layers) curves.push_back(lp.ordered);
  write_curves(dir / "curves", curves, out.plan.config_hash);
  if (out.model) save_model(dir / "model", *out.model, out.plan.config_hash);
  if (out.pruned_model) save_model(dir / "pruned_model", *out.pruned_model, out.plan.config_hash);
}

void log_report(const PruneReport& r) {
  spdlog::info("filters pruned {}/{} ({:.2f}%), parameters {} -> {}, accuracy {:.4f} -> {:.4f}",
               r.filters_pruned, r.filters_total, 100.0 * r.pruned_percent, r.parameters_total,
               r.parameters_retained, r.accuracy_full, r.accuracy_before_retrain);
}

}  // namespace

ToyRun prepare_toy(const RunConfig& cfg) {
  cfg.validate();
  ToyRun run;
  SyntheticSpec spec;
  spec.num_classes = cfg.num_classes;
  spec.height = spec.width = cfg.image_size;
  spec.noise = cfg.noise;

  spec.samples = cfg.train_samples;
  spec.seed = derive(cfg.seed, 1);
  spec.split = Split::train;
  run.train = make_synthetic_dataset(spec);

  spec.samples = cfg.test_samples;
  spec.seed = derive(cfg.seed, 2);
  spec.split = Split::test;
  run.test = make_synthetic_dataset(spec);

  run.eval = run.train.slice(0, cfg.eval_samples);
  run.feature_batch = run.train.slice(0, cfg.feature_batch);

  if (!cfg.model_dir.empty()) {
    run.model = load_model(cfg.model_dir);
    spdlog::info("loaded model from {}", cfg.model_dir.string());
  } else {
    ToyArchitecture arch = ToyArchitecture::reference(cfg.num_classes, cfg.batch_norm);
    arch.height = arch.width = cfg.image_size;
    run.model = make_toy_model(arch, derive(cfg.seed, 3));
    if (cfg.train_epochs > 0) {
      TrainParams p;
      p.epochs = cfg.train_epochs;
      p.batch_size = cfg.batch_size;
      p.learning_rate = cfg.learning_rate;
      p.momentum = cfg.momentum;
      p.seed = derive(cfg.seed, 4);
      run.model = train(run.model, run.train, p).model;
    }
  }
  spdlog::info("toy model: {} parameters, test accuracy {:.4f}", parameter_count(run.model),
               evaluate(run.model, run.test));
  return run;
}

FeatureDump extract_stage(const RunConfig& cfg, const ToyRun& run) {
  FeatureDump dump;
  dump.layers = forward_extract(run.model, run.feature_batch);
  dump.labels = run.feature_batch.labels;
  dump.manifest = write_feature_dump(cfg.output_dir / "features", dump.layers, dump.labels, "toy");
  save_model(cfg.output_dir / "model", run.model, config_hash(cfg));
  write_file_atomic(cfg.output_dir / "run_config.json", to_json(cfg));
  spdlog::info("wrote {} layer dumps to {}", dump.layers.size(),
               (cfg.output_dir / "features").string());
  return dump;
}

std::vector<OrderedLayer> order_stage(const RunConfig& cfg, const FeatureDump& dump) {
  const NormalizedKernel y = label_kernel(dump.labels);
  const EntropyOrder order(cfg.prune.alpha);
  std::vector<OrderedLayer> out;
  for (const auto& layer : dump.layers) {
    if (cfg.only_layer && *cfg.only_layer != layer.layer_id) continue;
    out.push_back(order_layer(layer, y, ConditioningContext::per_layer(), order, cfg.prune.kernel));
    spdlog::info("ordered layer {} ({} feature maps)", layer.layer_id, layer.size());
  }
  require(!cfg.only_layer || !out.empty(), ErrorCode::ConfigInvalid,
          "layer " + std::to_string(cfg.only_layer.value_or(0)) + " is not in the dump");
  write_curves(cfg.output_dir / "curves", out, config_hash(cfg));
  return out;
}

PruneOutcome prune_stage(const RunConfig& cfg, const ToyRun& run) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  const std::vector<LayerFeatures> features = forward_extract(run.model, run.feature_batch);
  const NormalizedKernel y = label_kernel(run.feature_batch.labels);
  ToyPruneTarget target(run.model, run.eval, cfg.prune.mode);

  PruneOutcome out;
  out.plan = prune(&target, std::span<const LayerFeatures>(features), y, cfg.prune);
  out.plan.config_hash = hash;
  spdlog::info("plan ready after {} trial evaluations, start layer {}", target.evaluations(),
               out.plan.start_layer);
  out.report = summarize(out.plan, run.model, run.test);
  out.report.config_hash = hash;
  out.model = run.model;
  out.pruned_model = apply_mask(run.model, out.plan.masks(), out.plan.mode);
  log_report(out.report);
  write_outputs(cfg, out);
  return out;
}

PruneOutcome prune_stage(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.source == "toy") return prune_stage(cfg, prepare_toy(cfg));

  const FeatureDump dump = read_feature_dump(cfg.dump_path);
  const NormalizedKernel y = label_kernel(dump.labels);
  PruneOutcome out;
  out.plan = prune(nullptr, std::span<const LayerFeatures>(dump.layers), y, cfg.prune);
  out.plan.config_hash = config_hash(cfg);
  out.report = summarize_counts(out.plan);
  spdlog::info("external dump: pruned {}/{} filters", out.report.filters_pruned,
               out.report.filters_total);
  write_outputs(cfg, out);
  return out;
}

PruneReport retrain_stage(const RunConfig& cfg, const ToyRun& run, PruneOutcome& outcome) {
  require(outcome.model.has_value(), ErrorCode::ConfigInvalid, "retraining needs a toy model");
  const MaskSet masks = outcome.plan.masks();
  ToyModel pruned = apply_mask(*outcome.model, masks, outcome.plan.mode);
  if (cfg.retrain_epochs > 0) {
    TrainParams p;
    p.epochs = cfg.retrain_epochs;
    p.batch_size = cfg.batch_size;
    p.learning_rate = cfg.learning_rate;
    p.momentum = cfg.momentum;
    p.seed = derive(cfg.seed, 5);
    if (outcome.plan.mode == PruneMode::zero_weight) p.frozen_zero = masks;
    pruned = train(pruned, run.train, p).model;
  }
  outcome.report.accuracy_after_retrain = evaluate(pruned, run.test);
  spdlog::info("accuracy after {} retraining epochs: {:.4f}", cfg.retrain_epochs,
               *outcome.report.accuracy_after_retrain);
  write_file_atomic(cfg.output_dir / "report.json", report_to_json(outcome.report, outcome.plan));
  write_file_atomic(cfg.output_dir / "report.csv", report_to_csv(outcome.report, outcome.plan));
  save_model(cfg.output_dir / "retrained_model", pruned, outcome.plan.config_hash);
  return outcome.report;
}

PruneReport retrain_stage(const RunConfig& cfg) {
  RunConfig local = cfg;
  local.model_dir = cfg.output_dir / "model";
  const ToyRun run = prepare_toy(local);
  PruneOutcome outcome;
  outcome.plan = plan_from_json(read_file(cfg.output_dir / "plan.json"));
  outcome.report = report_from_json(read_file(cfg.output_dir / "report.json"));
  if (outcome.plan.config_hash != config_hash(cfg)) {
    spdlog::warn("plan was produced under config {}, retraining under {}", outcome.plan.config_hash,
                 config_hash(cfg));
  }
  outcome.model = run.model;
  return retrain_stage(cfg, run, outcome);
}

PruneReport report_stage(const fs::path& output_dir) {
  const PruningPlan plan = plan_from_json(read_file(output_dir / "plan.json"));
  const PruneReport report = report_from_json(read_file(output_dir / "report.json"));
  write_file_atomic(output_dir / "report.csv", report_to_csv(report, plan));
  log_report(report);
  return report;
}

}  // namespace cmiprune
