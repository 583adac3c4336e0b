#include "cmiprune/run_config.hpp"

#include "cmiprune/error.hpp"
#include "cmiprune/npy.hpp"
#include "cmiprune/sha256.hpp"

#include <json.hpp>

namespace cmiprune {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json prune_to_json(const PruneConfig& p) {
  return {
      {"strategy", to_string(p.strategy)},
      {"cutoff", to_string(p.cutoff)},
      {"direction", to_string(p.direction)},
      {"mode", to_string(p.mode)},
      {"target_accuracy", optional_number(p.target_accuracy)},
      {"accuracy_drop", optional_number(p.accuracy_drop)},
      {"alpha", p.alpha},
      {"kernel",
       {{"kind", p.kernel.kind == KernelSpec::Kind::rbf ? "rbf" : "delta"},
        {"bandwidth",
         p.kernel.bandwidth == KernelSpec::Bandwidth::median_heuristic ? "median" : "fixed"},
        {"sigma", p.kernel.sigma}}},
      {"scree",
       {{"top_k", p.scree.top_k},
        {"denom_epsilon", p.scree.denom_epsilon},
        {"fallback", p.scree.fallback == ScreeParams::Fallback::max_candidate ? "max_candidate"
                                                                               : "best_accuracy"}}},
      {"xmeans", {{"k_init", p.xmeans.k_init}, {"k_max", p.xmeans.k_max}}},
      {"permutation",
       {{"permutations", p.permutation.permutations},
        {"significance", p.permutation.significance}}},
      {"seed", p.seed},
      {"prune_last_layer", p.prune_last_layer},
      {"keep_stage1_masks", p.keep_stage1_masks},
  };
}

PruneConfig prune_from_json(const json& j) {
  PruneConfig p;
  p.strategy = parse_strategy(j.value("strategy", std::string(to_string(p.strategy))));
  p.cutoff = parse_cutoff_method(j.value("cutoff", std::string(to_string(p.cutoff))));
  p.direction = parse_direction(j.value("direction", std::string(to_string(p.direction))));
  p.mode = parse_prune_mode(j.value("mode", std::string(to_string(p.mode))));
  p.target_accuracy = read_optional(j, "target_accuracy");
  p.accuracy_drop = read_optional(j, "accuracy_drop");
  p.alpha = j.value("alpha", p.alpha);
  if (j.contains("kernel")) {
    const json& k = j.at("kernel");
    const std::string kind = k.value("kind", std::string("rbf"));
    const std::string bw = k.value("bandwidth", std::string("median"));
    require(kind == "rbf" || kind == "delta", ErrorCode::ConfigInvalid, "unknown kernel '" + kind + "'");
    require(bw == "median" || bw == "fixed", ErrorCode::ConfigInvalid,
            "unknown bandwidth rule '" + bw + "'");
    p.kernel.kind = kind == "rbf" ? KernelSpec::Kind::rbf : KernelSpec::Kind::delta;
    p.kernel.bandwidth =
        bw == "median" ? KernelSpec::Bandwidth::median_heuristic : KernelSpec::Bandwidth::fixed;
    p.kernel.sigma = k.value("sigma", p.kernel.sigma);
  }
  if (j.contains("scree")) {
    const json& s = j.at("scree");
    p.scree.top_k = s.value("top_k", p.scree.top_k);
    p.scree.denom_epsilon = s.value("denom_epsilon", p.scree.denom_epsilon);
    const std::string fb = s.value("fallback", std::string("max_candidate"));
    require(fb == "max_candidate" || fb == "best_accuracy", ErrorCode::ConfigInvalid,
            "unknown scree fallback '" + fb + "'");
    p.scree.fallback = fb == "max_candidate" ? ScreeParams::Fallback::max_candidate
                                             : ScreeParams::Fallback::best_accuracy;
  }
  if (j.contains("xmeans")) {
    p.xmeans.k_init = j.at("xmeans").value("k_init", p.xmeans.k_init);
    p.xmeans.k_max = j.at("xmeans").value("k_max", p.xmeans.k_max);
  }
  if (j.contains("permutation")) {
    p.permutation.permutations = j.at("permutation").value("permutations", p.permutation.permutations);
    p.permutation.significance = j.at("permutation").value("significance", p.permutation.significance);
  }
  p.seed = j.value("seed", p.seed);
  p.prune_last_layer = j.value("prune_last_layer", p.prune_last_layer);
  p.keep_stage1_masks = j.value("keep_stage1_masks", p.keep_stage1_masks);
  return p;
}

json config_to_json(const RunConfig& c) {
  return {
      {"prune", prune_to_json(c.prune)},
      {"source", c.source},
      {"dump_path", c.dump_path.generic_string()},
      {"model_dir", c.model_dir.generic_string()},
      {"output_dir", c.output_dir.generic_string()},
      {"num_classes", c.num_classes},
      {"batch_norm", c.batch_norm},
      {"image_size", c.image_size},
      {"noise", c.noise},
      {"train_samples", c.train_samples},
      {"test_samples", c.test_samples},
      {"feature_batch", c.feature_batch},
      {"eval_samples", c.eval_samples},
      {"train_epochs", c.train_epochs},
      {"retrain_epochs", c.retrain_epochs},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"momentum", c.momentum},
      {"seed", c.seed},
      {"only_layer", c.only_layer ? json(*c.only_layer) : json(nullptr)},
  };
}

}  // namespace

void RunConfig::validate() const {
  prune.validate();
  require(source == "toy" || source == "external", ErrorCode::ConfigInvalid,
          "source must be 'toy' or 'external'");
  require(source == "toy" || !dump_path.empty(), ErrorCode::ConfigInvalid,
          "external runs need a feature dump path");
  require(num_classes >= 2 && num_classes <= 4, ErrorCode::ConfigInvalid,
          "toy data supports 2 to 4 classes");
  require(image_size >= 8 && image_size % 4 == 0, ErrorCode::ConfigInvalid,
          "image size must be a multiple of 4, at least 8");
  require(train_samples >= 2 && test_samples >= 1 && eval_samples >= 1, ErrorCode::ConfigInvalid,
          "sample counts must be positive");
  require(feature_batch >= 2 && feature_batch <= train_samples, ErrorCode::ConfigInvalid,
          "feature batch must lie in [2, train_samples]");
  require(eval_samples <= train_samples, ErrorCode::ConfigInvalid,
          "eval samples cannot exceed train samples");
  require(train_epochs >= 0 && retrain_epochs >= 0 && batch_size >= 1, ErrorCode::ConfigInvalid,
          "epochs must be >= 0 and batch size >= 1");
  require(learning_rate > 0.0 && momentum >= 0.0 && momentum < 1.0, ErrorCode::ConfigInvalid,
          "learning rate must be > 0 and momentum in [0, 1)");
  require(!only_layer || *only_layer >= 1, ErrorCode::ConfigInvalid, "layer ids start at 1");
}

std::string to_json(const RunConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

RunConfig run_config_from_json(std::string_view text) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    if (j.contains("prune")) c.prune = prune_from_json(j.at("prune"));
    c.source = j.value("source", c.source);
    c.dump_path = j.value("dump_path", std::string());
    c.model_dir = j.value("model_dir", std::string());
    c.output_dir = j.value("output_dir", c.output_dir.generic_string());
    c.num_classes = j.value("num_classes", c.num_classes);
    c.batch_norm = j.value("batch_norm", c.batch_norm);
    c.image_size = j.value("image_size", c.image_size);
    c.noise = j.value("noise", c.noise);
    c.train_samples = j.value("train_samples", c.train_samples);
    c.test_samples = j.value("test_samples", c.test_samples);
    c.feature_batch = j.value("feature_batch", c.feature_batch);
    c.eval_samples = j.value("eval_samples", c.eval_samples);
    c.train_epochs = j.value("train_epochs", c.train_epochs);
    c.retrain_epochs = j.value("retrain_epochs", c.retrain_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.momentum = j.value("momentum", c.momentum);
    c.seed = j.value("seed", c.seed);
    if (j.contains("only_layer") && !j.at("only_layer").is_null()) {
      c.only_layer = j.at("only_layer").get<int>();
    }
  } catch (const json::exception& e) {
    raise(ErrorCode::ConfigInvalid, std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_file(path));
}

std::string config_hash(const RunConfig& cfg) {
  json j = config_to_json(cfg);
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

}  // namespace cmiprune
