#include "cmiprune/model_io.hpp"

#include "cmiprune/error.hpp"
#include "cmiprune/npy.hpp"

#include <json.hpp>

namespace cmiprune {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string put_matrix(const fs::path& dir, const std::string& name, const Matrix& m,
                       std::vector<std::size_t> shape) {
  const RowMajor rm = m;
  write_npy(dir / name, NpyArray::from(std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())),
                                       std::move(shape)));
  return name;
}

std::string put_vector(const fs::path& dir, const std::string& name, const Eigen::VectorXd& v) {
  write_npy(dir / name, NpyArray::from(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())),
                                       {static_cast<std::size_t>(v.size())}));
  return name;
}

NpyArray get(const fs::path& dir, const json& j, const char* key, std::vector<std::size_t> shape) {
  const fs::path file = dir / j.at(key).get<std::string>();
  require(fs::is_regular_file(file), ErrorCode::ManifestMissing, "missing model tensor " + file.string());
  NpyArray a = read_npy(file);
  require(a.shape == shape, ErrorCode::ShapeMismatch, file.string() + ": unexpected tensor shape");
  return a;
}

Matrix get_matrix(const fs::path& dir, const json& j, const char* key, Eigen::Index rows,
                  Eigen::Index cols, std::vector<std::size_t> shape) {
  const std::vector<double> v = get(dir, j, key, std::move(shape)).as_f64();
  return Eigen::Map<const RowMajor>(v.data(), rows, cols);
}

Eigen::VectorXd get_vector(const fs::path& dir, const json& j, const char* key, Eigen::Index n) {
  const std::vector<double> v = get(dir, j, key, {static_cast<std::size_t>(n)}).as_f64();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), n);
}

}  // namespace

void save_model(const fs::path& dir, const ToyModel& model, const std::string& config_hash) {
  model.validate();
  fs::create_directories(dir);
  json j;
  j["format_version"] = 1;
  j["input_channels"] = model.input_channels;
  j["height"] = model.height;
  j["width"] = model.width;
  j["num_classes"] = model.num_classes();
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  j["conv"] = json::array();
  for (int l = 0; l < model.num_layers(); ++l) {
    const ConvLayer& c = model.conv[static_cast<std::size_t>(l)];
    const std::string p = "conv" + std::to_string(l + 1) + "_";
    json e = {{"in_channels", c.in_channels},
              {"out_channels", c.out_channels},
              {"kernel", c.kernel},
              {"pool_after", c.pool_after}};
    const auto k = static_cast<std::size_t>(c.kernel);
    e["weight"] = put_matrix(dir, p + "weight.npy", c.weight,
                             {static_cast<std::size_t>(c.out_channels),
                              static_cast<std::size_t>(c.in_channels), k, k});
    e["bias"] = put_vector(dir, p + "bias.npy", c.bias);
    if (c.bn) {
      e["batch_norm"] = {{"eps", c.bn->eps},
                         {"momentum", c.bn->momentum},
                         {"gamma", put_vector(dir, p + "bn_gamma.npy", c.bn->gamma)},
                         {"beta", put_vector(dir, p + "bn_beta.npy", c.bn->beta)},
                         {"running_mean", put_vector(dir, p + "bn_mean.npy", c.bn->running_mean)},
                         {"running_var", put_vector(dir, p + "bn_var.npy", c.bn->running_var)}};
    }
    j["conv"].push_back(std::move(e));
  }
  j["head"] = {{"weight", put_matrix(dir, "head_weight.npy", model.head.weight,
                                     {static_cast<std::size_t>(model.head.weight.rows()),
                                      static_cast<std::size_t>(model.head.weight.cols())})},
               {"bias", put_vector(dir, "head_bias.npy", model.head.bias)}};
  write_file_atomic(dir / "model.json", j.dump(2) + "\n");
}

ToyModel load_model(const fs::path& dir) {
  const fs::path file = dir / "model.json";
  require(fs::is_regular_file(file), ErrorCode::ManifestMissing, "no model.json in " + dir.string());
  ToyModel model;
  try {
    const json j = json::parse(read_file(file));
    model.input_channels = j.at("input_channels").get<int>();
    model.height = j.at("height").get<int>();
    model.width = j.at("width").get<int>();
    for (const json& e : j.at("conv")) {
      ConvLayer c;
      c.in_channels = e.at("in_channels").get<int>();
      c.out_channels = e.at("out_channels").get<int>();
      c.kernel = e.at("kernel").get<int>();
      c.pool_after = e.at("pool_after").get<bool>();
      const auto k = static_cast<std::size_t>(c.kernel);
      c.weight = get_matrix(dir, e, "weight", c.out_channels,
                            static_cast<Eigen::Index>(c.in_channels) * c.kernel * c.kernel,
                            {static_cast<std::size_t>(c.out_channels),
                             static_cast<std::size_t>(c.in_channels), k, k});
      c.bias = get_vector(dir, e, "bias", c.out_channels);
      if (e.contains("batch_norm")) {
        const json& b = e.at("batch_norm");
        BatchNorm bn;
        bn.eps = b.at("eps").get<double>();
        bn.momentum = b.at("momentum").get<double>();
        bn.gamma = get_vector(dir, b, "gamma", c.out_channels);
        bn.beta = get_vector(dir, b, "beta", c.out_channels);
        bn.running_mean = get_vector(dir, b, "running_mean", c.out_channels);
        bn.running_var = get_vector(dir, b, "running_var", c.out_channels);
        c.bn = std::move(bn);
      }
      model.conv.push_back(std::move(c));
    }
    const json& h = j.at("head");
    const int classes = j.at("num_classes").get<int>();
    const NpyArray w = read_npy(dir / h.at("weight").get<std::string>());
    require(w.shape.size() == 2 && w.shape[0] == static_cast<std::size_t>(classes),
            ErrorCode::ShapeMismatch, "head weight shape disagrees with num_classes");
    const std::vector<double> wv = w.as_f64();
    model.head.weight = Eigen::Map<const RowMajor>(wv.data(), classes,
                                                   static_cast<Eigen::Index>(w.shape[1]));
    model.head.bias = get_vector(dir, h, "bias", classes);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::ConfigInvalid, file.string() + ": " + e.what());
  }
  model.validate();
  return model;
}

}  // namespace cmiprune
