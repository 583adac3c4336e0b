#include "cmiprune/error.hpp"
#include "cmiprune/feature_dump.hpp"
#include "cmiprune/model_io.hpp"
#include "cmiprune/npy.hpp"
#include "cmiprune/pipeline.hpp"
#include "cmiprune/plan_io.hpp"
#include "cmiprune/run_config.hpp"
#include "cmiprune/sha256.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

using namespace cmiprune;
using support::error_code;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            ("cmiprune_" + std::string(info->test_suite_name()) + "_" + info->name() + "_" +
             std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  [[nodiscard]] const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::vector<LayerFeatures> random_layers(std::mt19937_64& rng, int n) {
  std::vector<LayerFeatures> out;
  const int filters[] = {3, 5};
  const int side[] = {4, 2};
  std::normal_distribution<double> g(0.0, 1.0);
  for (int l = 0; l < 2; ++l) {
    LayerFeatures layer;
    layer.layer_id = l + 1;
    layer.height = layer.width = side[l];
    for (int f = 0; f < filters[l]; ++f) {
      FeatureMatrix fm;
      fm.layer_id = l + 1;
      fm.feature_index = f;
      fm.data.resize(n, side[l] * side[l]);
      // float-representable values so the float32 round trip is exact
      for (Eigen::Index i = 0; i < fm.data.size(); ++i) fm.data.data()[i] = static_cast<float>(g(rng));
      layer.features.push_back(fm);
    }
    out.push_back(layer);
  }
  return out;
}

void overwrite(const fs::path& p, const std::string& contents) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << contents;
}

RunConfig tiny_run_config(const fs::path& out) {
  RunConfig cfg;
  cfg.output_dir = out;
  cfg.train_samples = 96;
  cfg.test_samples = 48;
  cfg.feature_batch = 32;
  cfg.eval_samples = 48;
  cfg.train_epochs = 1;
  cfg.retrain_epochs = 1;
  cfg.seed = 5;
  cfg.prune.accuracy_drop = 0.05;
  return cfg;
}

}  // namespace

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Npy, RoundTripAllTypes) {
  const std::vector<float> f = {1.5f, -2.25f, 3.0f, 0.0f, 1e-30f, 7.0f};
  const std::vector<double> d = {1.0 / 3.0, -1e300};
  const std::vector<std::int64_t> i = {-5, 1LL << 40, 0};
  const auto ef = encode_npy(NpyArray::from(f, {2, 3}));
  EXPECT_EQ(ef.substr(0, 6), std::string("\x93NUMPY"));
  EXPECT_EQ(ef[6], 1);
  const std::size_t header = 10 + static_cast<unsigned char>(ef[8]) + 256u * static_cast<unsigned char>(ef[9]);
  EXPECT_EQ(header % 64, 0u);
  const NpyArray af = decode_npy(ef);
  EXPECT_EQ(af.descr, "<f4");
  EXPECT_EQ(af.shape, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(af.as_f32(), f);
  EXPECT_EQ(decode_npy(encode_npy(NpyArray::from(d, {2}))).as_f64(), d);
  EXPECT_EQ(decode_npy(encode_npy(NpyArray::from(i, {3}))).as_i64(), i);
  EXPECT_EQ(decode_npy(encode_npy(NpyArray::from(std::span<const double>{}, {0, 4}))).count(), 0u);
}

TEST(Npy, DecodeErrors) {
  std::string bytes = encode_npy(NpyArray::from(std::vector<double>{1, 2, 3, 4}, {4}));
  EXPECT_EQ(error_code([&] { decode_npy(bytes.substr(0, bytes.size() - 3)); }), ErrorCode::TruncatedTensor);
  EXPECT_EQ(error_code([&] { decode_npy("not an npy file at all"); }), ErrorCode::HeaderMismatch);
  std::string fortran = bytes;
  const auto pos = fortran.find("False");
  ASSERT_NE(pos, std::string::npos);
  fortran.replace(pos, 5, "True ");
  EXPECT_EQ(error_code([&] { decode_npy(fortran); }), ErrorCode::HeaderMismatch);
  std::string big_endian = bytes;
  big_endian[big_endian.find("<f8")] = '>';
  EXPECT_EQ(error_code([&] { decode_npy(big_endian); }), ErrorCode::HeaderMismatch);
}

TEST(Npy, FileHelpers) {
  TempDir tmp;
  const fs::path p = tmp.path() / "a" / "x.npy";
  fs::create_directories(p.parent_path());
  write_npy(p, NpyArray::from(std::vector<double>{4, 5}, {1, 2}));
  EXPECT_EQ(read_npy(p).as_f64(), (std::vector<double>{4, 5}));
  EXPECT_EQ(error_code([&] { (void)read_file(tmp.path() / "missing"); }), ErrorCode::IoFailure);
}

TEST(FeatureDump, RoundTripIsBitExact) {
  TempDir tmp;
  std::mt19937_64 rng(1);
  const auto layers = random_layers(rng, 6);
  const std::vector<int> labels = {0, 1, 2, 0, 1, 2};
  const auto manifest = write_feature_dump(tmp.path(), layers, labels);
  EXPECT_EQ(manifest.num_layers, 2);
  EXPECT_EQ(manifest.batch_size, 6);
  const FeatureDump dump = read_feature_dump(tmp.path() / "manifest.json");
  EXPECT_EQ(dump.labels, labels);
  ASSERT_EQ(dump.layers.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(dump.layers[l].layer_id, layers[l].layer_id);
    EXPECT_EQ(dump.layers[l].height, layers[l].height);
    ASSERT_EQ(dump.layers[l].size(), layers[l].size());
    for (int f = 0; f < layers[l].size(); ++f) {
      EXPECT_TRUE(dump.layers[l].features[static_cast<std::size_t>(f)].data ==
                  layers[l].features[static_cast<std::size_t>(f)].data);
    }
  }
  EXPECT_EQ(dump.manifest.layers[1].sha256, sha256_file(tmp.path() / dump.manifest.layers[1].file));
}

TEST(FeatureDump, ValidationErrors) {
  TempDir tmp;
  std::mt19937_64 rng(2);
  const std::vector<int> labels = {0, 1, 0, 1};
  write_feature_dump(tmp.path(), random_layers(rng, 4), labels);
  EXPECT_EQ(error_code([&] { read_feature_dump(tmp.path() / "nowhere"); }), ErrorCode::ManifestMissing);

  const fs::path manifest = tmp.path() / "manifest.json";
  const std::string original = read_file(manifest);
  std::string wrong_count = original;
  const auto pos = wrong_count.find("\"num_filters\": 3");
  ASSERT_NE(pos, std::string::npos) << original;
  wrong_count.replace(pos, 16, "\"num_filters\": 4");
  overwrite(manifest, wrong_count);
  EXPECT_EQ(error_code([&] { read_feature_dump(tmp.path()); }), ErrorCode::HeaderMismatch);
  overwrite(manifest, original);

  const fs::path layer = tmp.path() / "layer_1.npy";
  std::string bytes = read_file(layer);
  bytes.back() ^= 0x01;
  overwrite(layer, bytes);
  EXPECT_EQ(error_code([&] { read_feature_dump(tmp.path()); }), ErrorCode::ChecksumMismatch);
}

TEST(FeatureDump, EightDeclaredOverSevenStored) {
  TempDir tmp;
  std::mt19937_64 rng(3);
  auto layers = random_layers(rng, 4);
  layers.resize(1);
  layers[0].features.resize(7, layers[0].features[0]);
  const std::vector<int> labels = {0, 1, 0, 1};
  write_feature_dump(tmp.path(), layers, labels);
  const fs::path manifest = tmp.path() / "manifest.json";
  std::string text = read_file(manifest);
  const auto pos = text.find("\"num_filters\": 7");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 16, "\"num_filters\": 8");
  overwrite(manifest, text);
  EXPECT_EQ(error_code([&] { read_feature_dump(tmp.path()); }), ErrorCode::HeaderMismatch);
}

TEST(FeatureDump, ExternalFixture) {
  const char* dir = std::getenv("CMIPRUNE_EXTERNAL_DUMP");
  if (dir == nullptr) GTEST_SKIP() << "CMIPRUNE_EXTERNAL_DUMP not set";
  const FeatureDump dump = read_feature_dump(dir);
  EXPECT_EQ(dump.manifest.source, "external");
  ASSERT_FALSE(dump.layers.empty());
  for (std::size_t l = 0; l < dump.layers.size(); ++l) {
    const auto& entry = dump.manifest.layers[l];
    EXPECT_EQ(entry.sha256, sha256_file(fs::path(dir) / entry.file));
    EXPECT_EQ(dump.layers[l].size(), entry.num_filters);
    EXPECT_EQ(dump.layers[l].samples(), static_cast<Eigen::Index>(dump.labels.size()));
  }
}

TEST(ModelIo, RoundTrip) {
  TempDir tmp;
  for (bool bn : {false, true}) {
    const ToyModel m = make_toy_model(ToyArchitecture::reference(3, bn), 4);
    save_model(tmp.path() / (bn ? "bn" : "plain"), m, "abc");
    const ToyModel back = load_model(tmp.path() / (bn ? "bn" : "plain"));
    EXPECT_EQ(flatten_parameters(back), flatten_parameters(m));
    ASSERT_EQ(back.num_layers(), 3);
    EXPECT_EQ(back.conv[1].pool_after, m.conv[1].pool_after);
    if (bn) EXPECT_TRUE(back.conv[2].bn->running_var == m.conv[2].bn->running_var);
  }
  MaskSet masks = MaskSet::all_kept({8, 16, 16});
  masks.retain_only(1, {2, 4, 6});
  const ToyModel pruned = apply_mask(make_toy_model(ToyArchitecture::reference(4, false), 1), masks, PruneMode::actual);
  save_model(tmp.path() / "pruned", pruned);
  EXPECT_EQ(parameter_count(load_model(tmp.path() / "pruned")), parameter_count(pruned));
}

TEST(RunConfig, JsonRoundTripAndHash) {
  RunConfig cfg;
  cfg.prune.strategy = Strategy::cross_full;
  cfg.prune.cutoff = CutoffMethod::permutation;
  cfg.prune.accuracy_drop = 0.01;
  cfg.prune.kernel = KernelSpec::rbf_fixed(2.5);
  cfg.only_layer = 2;
  cfg.seed = 99;
  const RunConfig back = run_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  EXPECT_EQ(config_hash(cfg).size(), 64u);

  RunConfig moved = cfg;
  moved.output_dir = "/elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(cfg));
  RunConfig changed = cfg;
  changed.prune.scree.top_k = 4;
  EXPECT_NE(config_hash(changed), config_hash(cfg));
  EXPECT_EQ(error_code([] { run_config_from_json("{\"prune\": {\"strategy\": \"nope\"}}"); }), ErrorCode::ConfigInvalid);
  EXPECT_EQ(error_code([] { run_config_from_json("{not json"); }), ErrorCode::ConfigInvalid);
}

TEST(PlanIo, JsonRoundTripAndCsv) {
  std::mt19937_64 rng(4);
  const auto labels = support::random_labels(rng, 16, 2);
  std::vector<KernelList> kernels = {
      build_layer_kernels(support::random_layer(rng, 4, 16, 2, labels), KernelSpec::rbf_median()),
      build_layer_kernels(support::random_layer(rng, 5, 16, 2, labels), KernelSpec::rbf_median())};
  PruneConfig cfg;
  cfg.scree.top_k = 1;
  PruningPlan plan = prune(nullptr, std::span<const KernelList>(kernels), support::delta(labels), cfg);
  plan.config_hash = "deadbeef";
  const std::string json = plan_to_json(plan);
  EXPECT_EQ(plan_to_json(plan_from_json(json)), json);

  const PruneReport report = summarize_counts(plan);
  const PruneReport back = report_from_json(report_to_json(report, plan));
  EXPECT_EQ(back.filters_pruned, report.filters_pruned);

  const std::string csv = report_to_csv(report, plan);
  std::istringstream lines(csv);
  std::string header, first, second;
  std::getline(lines, header);
  std::getline(lines, first);
  std::getline(lines, second);
  EXPECT_EQ(header,
            "algorithm,parameters_retained,filters_pruned_percent,accuracy_before_retraining,"
            "accuracy_after_retraining,config_hash");
  EXPECT_EQ(first.rfind("No pruning (original model),", 0), 0u);
  EXPECT_EQ(second.rfind("\"" + describe(plan) + "\",", 0), 0u);
  EXPECT_NE(second.find("deadbeef"), std::string::npos);
  EXPECT_EQ(describe(plan), "Bi-directional pruning & compact CMI (scree, actual)");

  const std::string curve = curve_to_csv(plan.layers[0].ordered, "deadbeef");
  EXPECT_NE(curve.find("rank,feature,cmi"), std::string::npos);
  EXPECT_NE(curve.find("deadbeef"), std::string::npos);
}

TEST(Pipeline, PlansAreByteIdenticalAcrossRuns) {
  TempDir tmp;
  RunConfig a = tiny_run_config(tmp.path() / "a");
  RunConfig b = tiny_run_config(tmp.path() / "b");
  prune_stage(a);
  prune_stage(b);
  EXPECT_EQ(read_file(a.output_dir / "plan.json"), read_file(b.output_dir / "plan.json"));
  EXPECT_EQ(read_file(a.output_dir / "report.csv"), read_file(b.output_dir / "report.csv"));
  const std::string hash = config_hash(a);
  EXPECT_NE(read_file(a.output_dir / "plan.json").find(hash), std::string::npos);
  EXPECT_NE(read_file(a.output_dir / "curves" / "layer_1.csv").find(hash), std::string::npos);
}

TEST(Pipeline, ExtractOrderRetrainReport) {
  TempDir tmp;
  RunConfig cfg = tiny_run_config(tmp.path());
  const ToyRun run = prepare_toy(cfg);
  const FeatureDump dump = extract_stage(cfg, run);
  EXPECT_TRUE(fs::exists(tmp.path() / "features" / "manifest.json"));
  cfg.only_layer = 2;
  const auto curves = order_stage(cfg, read_feature_dump(tmp.path() / "features"));
  ASSERT_EQ(curves.size(), 1u);
  EXPECT_EQ(curves[0].layer_id, 2);
  EXPECT_TRUE(fs::exists(tmp.path() / "curves" / "layer_2.csv"));
  EXPECT_FALSE(fs::exists(tmp.path() / "curves" / "layer_1.csv"));
  EXPECT_FALSE(fs::exists(tmp.path() / "plan.json"));
  cfg.only_layer = 9;
  EXPECT_EQ(error_code([&] { order_stage(cfg, dump); }), ErrorCode::ConfigInvalid);
  cfg.only_layer.reset();

  PruneOutcome outcome = prune_stage(cfg, run);
  const PruneReport r = retrain_stage(cfg, run, outcome);
  ASSERT_TRUE(r.accuracy_after_retrain.has_value());
  EXPECT_TRUE(fs::exists(tmp.path() / "retrained_model" / "model.json"));
  const PruneReport again = report_stage(tmp.path());
  EXPECT_EQ(again.accuracy_after_retrain, r.accuracy_after_retrain);
}

TEST(Pipeline, ExternalDumpWithoutModel) {
  TempDir tmp;
  std::mt19937_64 rng(6);
  std::vector<int> labels(12);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
  write_feature_dump(tmp.path() / "dump", random_layers(rng, 12), labels, "external");
  RunConfig cfg;
  cfg.source = "external";
  cfg.dump_path = tmp.path() / "dump";
  cfg.output_dir = tmp.path() / "out";
  const PruneOutcome out = prune_stage(cfg);
  EXPECT_FALSE(out.model.has_value());
  EXPECT_TRUE(fs::exists(cfg.output_dir / "plan.json"));
  EXPECT_TRUE(fs::exists(cfg.output_dir / "report.csv"));
}
