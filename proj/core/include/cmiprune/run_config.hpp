#pragma once

#include "cmiprune/orchestrator.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace cmiprune {

/// Everything a pipeline run depends on. Serialized as JSON; the hash covers
/// every field except output_dir so relocated runs stay comparable.
struct RunConfig {
  PruneConfig prune;

  std::string source = "toy";           // "toy" or "external"
  std::filesystem::path dump_path;      // external feature dump directory
  std::filesystem::path model_dir;      // pre-trained toy model; trained from scratch if empty
  std::filesystem::path output_dir = "cmiprune_out";

  int num_classes = 4;
  bool batch_norm = false;
  int image_size = 16;
  double noise = 0.25;
  int train_samples = 2000;
  int test_samples = 1000;
  int feature_batch = 256;  // samples feeding the kernels
  int eval_samples = 1000;  // training samples used for trial accuracies

  int train_epochs = 20;
  int retrain_epochs = 20;
  int batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;

  std::uint64_t seed = 0;
  std::optional<int> only_layer;  // order a single layer (1-based)

  void validate() const;
};

std::string to_json(const RunConfig& cfg);
RunConfig run_config_from_json(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// SHA-256 of the canonical JSON (sorted keys, output_dir removed).
std::string config_hash(const RunConfig& cfg);

}  // namespace cmiprune
