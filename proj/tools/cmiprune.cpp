#include "cmiprune/error.hpp"
#include "cmiprune/feature_dump.hpp"
#include "cmiprune/parallel.hpp"
#include "cmiprune/pipeline.hpp"
#include "cmiprune/run_config.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <optional>
#include <string>

namespace {

using namespace cmiprune;

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::string> source, dump, model;
  std::optional<std::string> strategy, cutoff, direction, mode, fallback;
  std::optional<double> target, delta, alpha, sigma, significance, lr, momentum, noise;
  std::optional<int> top_k, k_max, permutations, classes, train_samples, test_samples;
  std::optional<int> feature_batch, eval_samples, epochs, retrain_epochs, batch_size, layer;
  std::optional<std::uint64_t> seed;
  bool batch_norm = false;
  bool prune_last_layer = false;
  bool keep_stage1_masks = false;
  int threads = 0;
  std::string log_level = "info";

  RunConfig resolve() const {
    RunConfig c = config ? load_run_config(*config) : RunConfig{};
    PruneConfig& p = c.prune;
    if (out) c.output_dir = *out;
    if (source) c.source = *source;
    if (dump) {
      c.dump_path = *dump;
      if (!source) c.source = "external";
    }
    if (model) c.model_dir = *model;
    if (strategy) p.strategy = parse_strategy(*strategy);
    if (cutoff) p.cutoff = parse_cutoff_method(*cutoff);
    if (direction) p.direction = parse_direction(*direction);
    if (mode) p.mode = parse_prune_mode(*mode);
    if (fallback) {
      require(*fallback == "max_candidate" || *fallback == "best_accuracy", ErrorCode::ConfigInvalid,
              "--fallback must be max_candidate or best_accuracy");
      p.scree.fallback = *fallback == "max_candidate" ? ScreeParams::Fallback::max_candidate
                                                      : ScreeParams::Fallback::best_accuracy;
    }
    if (target) p.target_accuracy = *target;
    if (delta) p.accuracy_drop = *delta;
    if (alpha) p.alpha = *alpha;
    if (sigma) p.kernel = KernelSpec::rbf_fixed(*sigma);
    if (top_k) p.scree.top_k = *top_k;
    if (k_max) p.xmeans.k_max = *k_max;
    if (permutations) p.permutation.permutations = *permutations;
    if (significance) p.permutation.significance = *significance;
    if (seed) {
      c.seed = *seed;
      p.seed = *seed;
    }
    if (prune_last_layer) p.prune_last_layer = true;
    if (keep_stage1_masks) p.keep_stage1_masks = true;
    if (batch_norm) c.batch_norm = true;
    if (classes) c.num_classes = *classes;
    if (noise) c.noise = *noise;
    if (train_samples) c.train_samples = *train_samples;
    if (test_samples) c.test_samples = *test_samples;
    if (feature_batch) c.feature_batch = *feature_batch;
    if (eval_samples) c.eval_samples = *eval_samples;
    if (epochs) c.train_epochs = *epochs;
    if (retrain_epochs) c.retrain_epochs = *retrain_epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (lr) c.learning_rate = *lr;
    if (momentum) c.momentum = *momentum;
    if (layer) c.only_layer = *layer;
    c.validate();
    return c;
  }
};

void add_options(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config, "Run configuration JSON");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--source", o.source, "toy or external")->check(CLI::IsMember({"toy", "external"}));
  app.add_option("--dump", o.dump, "External feature dump directory (implies --source external)");
  app.add_option("--model", o.model, "Directory of a saved toy model to use instead of training");

  app.add_option("--strategy", o.strategy, "per_layer | full | compact");
  app.add_option("--cutoff", o.cutoff, "scree | xmeans | permutation");
  app.add_option("--direction", o.direction, "forward | bidirectional");
  app.add_option("--mode", o.mode, "zero_weight | actual");
  app.add_option("--target", o.target, "Target accuracy a^p in [0, 1]");
  app.add_option("--delta", o.delta, "Allowed accuracy drop; a^p = a^f - delta");
  app.add_option("--alpha", o.alpha, "Renyi entropy order");
  app.add_option("--sigma", o.sigma, "Fixed RBF bandwidth (default: median heuristic)");
  app.add_option("--K", o.top_k, "Scree candidates evaluated");
  app.add_option("--fallback", o.fallback, "Scree fallback: max_candidate | best_accuracy");
  app.add_option("--k-max", o.k_max, "X-Means cluster limit (0: half the layer)");
  app.add_option("--permutations", o.permutations, "Permutation test trials");
  app.add_option("--significance", o.significance, "Permutation test level");
  app.add_flag("--prune-last-layer", o.prune_last_layer, "Allow pruning the final conv layer (zero_weight)");
  app.add_flag("--keep-stage1-masks", o.keep_stage1_masks, "Start sweeps from all stage-1 masks");

  app.add_option("--seed", o.seed, "Seed for data, model and cutoffs");
  app.add_flag("--batch-norm", o.batch_norm, "Toy model with batch normalization");
  app.add_option("--classes", o.classes, "Toy classes (2-4)");
  app.add_option("--noise", o.noise, "Toy image noise level");
  app.add_option("--train-samples", o.train_samples);
  app.add_option("--test-samples", o.test_samples);
  app.add_option("--feature-batch", o.feature_batch, "Samples used for the kernels");
  app.add_option("--eval-samples", o.eval_samples, "Training samples used for trial accuracies");
  app.add_option("--epochs", o.epochs, "Initial training epochs");
  app.add_option("--retrain-epochs", o.retrain_epochs);
  app.add_option("--batch-size", o.batch_size);
  app.add_option("--lr", o.lr);
  app.add_option("--momentum", o.momentum);
  app.add_option("--layer", o.layer, "Order a single layer (1-based)");

  app.add_option("--threads", o.threads, "Worker threads (0: CMIPRUNE_THREADS or hardware)");
  app.add_option("--log-level", o.log_level, "trace | debug | info | warn | error");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CMI-based structured pruning of convolutional feature maps"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  add_options(app, o);

  auto* extract = app.add_subcommand("extract", "Train or load the toy model and dump its feature maps");
  auto* order = app.add_subcommand("order", "Order feature maps per layer and write CMI curves");
  auto* prune = app.add_subcommand("prune", "Build a pruning plan and report");
  auto* retrain = app.add_subcommand("retrain", "Retrain the pruned toy model of a previous prune run");
  auto* report = app.add_subcommand("report", "Re-emit report.csv from an output directory");
  auto* run = app.add_subcommand("run", "prune followed by retrain");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(o.log_level));
  if (o.threads > 0) set_worker_count(o.threads);

  std::string stage = app.get_subcommands().front()->get_name();
  try {
    const RunConfig cfg = o.resolve();
    if (*extract) {
      extract_stage(cfg, prepare_toy(cfg));
    } else if (*order) {
      const FeatureDump dump = cfg.source == "external"
                                   ? read_feature_dump(cfg.dump_path)
                                   : extract_stage(cfg, prepare_toy(cfg));
      order_stage(cfg, dump);
    } else if (*prune) {
      prune_stage(cfg);
    } else if (*retrain) {
      retrain_stage(cfg);
    } else if (*report) {
      report_stage(cfg.output_dir);
    } else if (*run) {
      require(cfg.source == "toy", ErrorCode::ConfigInvalid, "run needs the toy source");
      const ToyRun toy = prepare_toy(cfg);
      PruneOutcome outcome = prune_stage(cfg, toy);
      stage = "retrain";
      retrain_stage(cfg, toy, outcome);
    }
  } catch (const Error& e) {
    spdlog::error("stage={} code={} {}", stage, to_string(e.code()), e.what());
    return 10 + static_cast<int>(e.code());
  } catch (const std::exception& e) {
    spdlog::error("stage={} code=Internal {}", stage, e.what());
    return 1;
  }
  return 0;
}
