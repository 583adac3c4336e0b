#pragma once

// Directory of per-layer NPY tensors (n x filters x h x w, float32), an int64
// label vector and a JSON manifest with SHA-256 checksums of every file.

#include "cmiprune/feature_ordering.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cmiprune {

struct DumpLayerEntry {
  int layer_id = 0;
  int num_filters = 0;
  int height = 0;
  int width = 0;
  std::string file;
  std::string sha256;
};

struct FeatureDumpManifest {
  static constexpr int kFormatVersion = 1;
  static constexpr const char* kFileName = "manifest.json";

  int format_version = kFormatVersion;
  int batch_size = 0;
  int num_layers = 0;
  std::string source = "toy";  // "toy" or "external"
  std::vector<DumpLayerEntry> layers;
  std::string labels_file = "labels.npy";
  std::string labels_sha256;
};

struct FeatureDump {
  FeatureDumpManifest manifest;
  std::vector<LayerFeatures> layers;
  std::vector<int> labels;
};

/// `path` is the dump directory or its manifest file.
FeatureDump read_feature_dump(const std::filesystem::path& path);

FeatureDumpManifest write_feature_dump(const std::filesystem::path& dir,
                                       std::span<const LayerFeatures> layers,
                                       std::span<const int> labels,
                                       const std::string& source = "toy");

}  // namespace cmiprune
