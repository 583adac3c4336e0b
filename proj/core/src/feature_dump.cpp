#include "cmiprune/feature_dump.hpp"

#include "cmiprune/error.hpp"
#include "cmiprune/npy.hpp"
#include "cmiprune/sha256.hpp"

#include <json.hpp>

namespace cmiprune {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    raise(ErrorCode::ManifestMissing, where + ": missing or invalid field '" + key + "'");
  }
}

FeatureDumpManifest parse_manifest(const fs::path& file) {
  const std::string where = file.string();
  require(fs::is_regular_file(file), ErrorCode::ManifestMissing, "no manifest at " + where);
  json j;
  try {
    j = json::parse(read_file(file));
  } catch (const json::exception& e) {
    raise(ErrorCode::ManifestMissing, where + ": " + e.what());
  }
  FeatureDumpManifest m;
  m.format_version = field<int>(j, "format_version", where);
  require(m.format_version == FeatureDumpManifest::kFormatVersion, ErrorCode::HeaderMismatch,
          where + ": unsupported format_version " + std::to_string(m.format_version));
  m.batch_size = field<int>(j, "batch_size", where);
  m.num_layers = field<int>(j, "num_layers", where);
  m.source = j.value("source", std::string("external"));
  for (const auto& entry : field<json>(j, "layers", where)) {
    DumpLayerEntry e;
    e.layer_id = field<int>(entry, "layer_id", where);
    e.num_filters = field<int>(entry, "num_filters", where);
    e.height = field<int>(entry, "height", where);
    e.width = field<int>(entry, "width", where);
    e.file = field<std::string>(entry, "file", where);
    e.sha256 = entry.value("sha256", std::string());
    m.layers.push_back(std::move(e));
  }
  const json labels = field<json>(j, "labels", where);
  m.labels_file = field<std::string>(labels, "file", where);
  m.labels_sha256 = labels.value("sha256", std::string());
  require(static_cast<int>(m.layers.size()) == m.num_layers, ErrorCode::HeaderMismatch,
          where + ": num_layers disagrees with the layer list");
  require(m.batch_size >= 2, ErrorCode::HeaderMismatch, where + ": batch_size must be >= 2");
  return m;
}

std::string load_checked(const fs::path& file, const std::string& expected) {
  require(fs::is_regular_file(file), ErrorCode::ManifestMissing,
          "manifest references missing file " + file.string());
  std::string bytes = read_file(file);
  if (!expected.empty()) {
    require(sha256_hex(bytes) == expected, ErrorCode::ChecksumMismatch,
            file.string() + ": SHA-256 differs from the manifest");
  }
  return bytes;
}

}  // namespace

FeatureDump read_feature_dump(const fs::path& path) {
  const fs::path manifest_file =
      fs::is_directory(path) ? path / FeatureDumpManifest::kFileName : path;
  const fs::path dir = manifest_file.parent_path();
  FeatureDump dump;
  dump.manifest = parse_manifest(manifest_file);
  const FeatureDumpManifest& m = dump.manifest;
  const auto n = static_cast<std::size_t>(m.batch_size);

  const fs::path labels_path = dir / m.labels_file;
  const NpyArray labels = decode_npy(load_checked(labels_path, m.labels_sha256), labels_path.string());
  require(labels.shape == std::vector<std::size_t>{n}, ErrorCode::HeaderMismatch,
          labels_path.string() + ": label shape disagrees with batch_size");
  for (std::int64_t v : labels.as_i64()) dump.labels.push_back(static_cast<int>(v));

  for (const DumpLayerEntry& e : m.layers) {
    const fs::path file = dir / e.file;
    const NpyArray t = decode_npy(load_checked(file, e.sha256), file.string());
    const std::vector<std::size_t> expected = {n, static_cast<std::size_t>(e.num_filters),
                                               static_cast<std::size_t>(e.height),
                                               static_cast<std::size_t>(e.width)};
    require(t.shape == expected, ErrorCode::HeaderMismatch,
            file.string() + ": tensor shape disagrees with the manifest entry for layer " +
                std::to_string(e.layer_id));
    const std::vector<double> values = t.as_f64();

    LayerFeatures layer;
    layer.layer_id = e.layer_id;
    layer.height = e.height;
    layer.width = e.width;
    const auto hw = static_cast<Eigen::Index>(e.height) * e.width;
    for (int f = 0; f < e.num_filters; ++f) {
      FeatureMatrix fm;
      fm.layer_id = e.layer_id;
      fm.feature_index = f;
      fm.data.resize(static_cast<Eigen::Index>(n), hw);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * static_cast<std::size_t>(e.num_filters) + static_cast<std::size_t>(f)) *
                                 static_cast<std::size_t>(hw);
        for (Eigen::Index p = 0; p < hw; ++p) {
          fm.data(static_cast<Eigen::Index>(i), p) = values[base + static_cast<std::size_t>(p)];
        }
      }
      layer.features.push_back(std::move(fm));
    }
    dump.layers.push_back(std::move(layer));
  }
  return dump;
}

FeatureDumpManifest write_feature_dump(const fs::path& dir, std::span<const LayerFeatures> layers,
                                       std::span<const int> labels, const std::string& source) {
  require(!layers.empty(), ErrorCode::InvalidArgument, "feature dump needs at least one layer");
  const std::size_t n = labels.size();
  fs::create_directories(dir);

  FeatureDumpManifest m;
  m.batch_size = static_cast<int>(n);
  m.num_layers = static_cast<int>(layers.size());
  m.source = source;

  std::vector<std::int64_t> label_values(labels.begin(), labels.end());
  const std::string label_bytes = encode_npy(NpyArray::from(std::span<const std::int64_t>(label_values), {n}));
  write_file_atomic(dir / m.labels_file, label_bytes);
  m.labels_sha256 = sha256_hex(label_bytes);

  for (const LayerFeatures& layer : layers) {
    const auto filters = static_cast<std::size_t>(layer.size());
    const auto hw = static_cast<std::size_t>(layer.height) * static_cast<std::size_t>(layer.width);
    std::vector<float> values(n * filters * hw);
    for (std::size_t f = 0; f < filters; ++f) {
      const Matrix& data = layer.features[f].data;
      require(static_cast<std::size_t>(data.rows()) == n && static_cast<std::size_t>(data.cols()) == hw,
              ErrorCode::DimensionMismatch,
              "layer " + std::to_string(layer.layer_id) + " feature " + std::to_string(f) +
                  " does not match the batch or spatial size");
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < hw; ++p) {
          values[(i * filters + f) * hw + p] =
              static_cast<float>(data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)));
        }
      }
    }
    DumpLayerEntry e;
    e.layer_id = layer.layer_id;
    e.num_filters = static_cast<int>(filters);
    e.height = layer.height;
    e.width = layer.width;
    e.file = "layer_" + std::to_string(layer.layer_id) + ".npy";
    const std::string bytes = encode_npy(NpyArray::from(
        std::span<const float>(values),
        {n, filters, static_cast<std::size_t>(layer.height), static_cast<std::size_t>(layer.width)}));
    write_file_atomic(dir / e.file, bytes);
    e.sha256 = sha256_hex(bytes);
    m.layers.push_back(std::move(e));
  }

  json j;
  j["format_version"] = m.format_version;
  j["batch_size"] = m.batch_size;
  j["num_layers"] = m.num_layers;
  j["source"] = m.source;
  j["layers"] = json::array();
  for (const auto& e : m.layers) {
    j["layers"].push_back({{"layer_id", e.layer_id},
                           {"num_filters", e.num_filters},
                           {"height", e.height},
                           {"width", e.width},
                           {"file", e.file},
                           {"sha256", e.sha256}});
  }
  j["labels"] = {{"file", m.labels_file}, {"sha256", m.labels_sha256}};
  write_file_atomic(dir / FeatureDumpManifest::kFileName, j.dump(2) + "\n");
  return m;
}

}  // namespace cmiprune
