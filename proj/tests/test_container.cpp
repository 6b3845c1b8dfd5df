#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rnnt/container.hpp"
#include "rnnt/io.hpp"
#include "rnnt/model.hpp"
#include "rnnt/toy.hpp"

namespace {

using namespace rnnt;

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "rnnt_container_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.feature_dim = 5;
  cfg.num_labels = 4;
  cfg.embed_dim = 6;
  cfg.enc_layers = 2;
  cfg.enc_units = 8;
  cfg.enc_proj = 3;
  cfg.reduction_after_layer = 1;
  cfg.pred_layers = 1;
  cfg.pred_units = 8;
  cfg.joint_dim = 7;
  cfg.layer_norm = true;
  return cfg;
}

TEST(FeatureFile, RoundTrip) {
  const auto path = (temp_dir() / "a.feat").string();
  FeatureSequence f;
  f.frames = Tensor2D(3, 4);
  for (size_t i = 0; i < f.frames.v.size(); ++i) f.frames.v[i] = 0.25f * static_cast<float>(i) - 1.0f;
  write_feature_file(path, f.frames);
  const Tensor2D back = read_feature_file(path);
  ASSERT_EQ(back.rows, 3);
  ASSERT_EQ(back.cols, 4);
  EXPECT_EQ(back.v, f.frames.v);
}

TEST(FeatureFile, RejectsTruncated) {
  const auto path = (temp_dir() / "trunc.feat").string();
  {
    std::ofstream os(path, std::ios::binary);
    const uint32_t t = 10, d = 10;
    os.write(reinterpret_cast<const char*>(&t), 4);
    os.write(reinterpret_cast<const char*>(&d), 4);
    const float x = 1.0f;
    os.write(reinterpret_cast<const char*>(&x), 4);  // 1 of 100 values
  }
  EXPECT_THROW(read_feature_file(path), IoError);
}

TEST(Manifest, WriteLoadDataset) {
  ToyTaskSpec spec;
  spec.num_labels = 4;
  spec.common_labels = 4;
  spec.feature_dim = 3;
  spec.seed = 7;
  const auto data = gen_toy_data(spec, 5);
  const auto dir = (temp_dir() / "ds").string();
  std::filesystem::create_directories(dir);
  const std::string manifest = write_dataset(data, dir);
  const auto back = load_dataset(manifest, data[0].features.frame_period);
  ASSERT_EQ(back.size(), data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].id, data[i].id);
    EXPECT_EQ(back[i].labels, data[i].labels);
    EXPECT_EQ(back[i].features.frames.v, data[i].features.frames.v);
    EXPECT_DOUBLE_EQ(back[i].features.frame_period, data[i].features.frame_period);
  }
}

TEST(Manifest, ParsesTranscripts) {
  EXPECT_EQ(parse_transcript("1 2 3"), (Labels{1, 2, 3}));
  EXPECT_EQ(parse_transcript("  7 "), (Labels{7}));
  EXPECT_TRUE(parse_transcript("").empty());
  EXPECT_THROW(parse_transcript("1 x 3"), IoError);
  EXPECT_THROW(parse_transcript("0 1"), IoError);  // 0 is the blank, never a unit
  EXPECT_EQ(format_transcript({4, 1}), "4 1");
}

TEST(Container, SaveLoadSaveByteIdentical) {
  auto m = init_model<float>(small_config(), 17);
  ModelContainer mc = to_container(m);
  const auto p1 = (temp_dir() / "m1.rntc").string();
  const auto p2 = (temp_dir() / "m2.rntc").string();
  save_container(mc, p1);
  ModelContainer loaded = load_container(p1);
  save_container(loaded, p2);
  const std::string b1 = slurp(p1), b2 = slurp(p2);
  ASSERT_FALSE(b1.empty());
  EXPECT_EQ(b1, b2);
}

TEST(Container, ModelRoundTripExact) {
  auto m = init_model<float>(small_config(), 3);
  ModelContainer mc = to_container(m);
  const auto path = (temp_dir() / "m3.rntc").string();
  save_container(mc, path);
  RnntModel<float> back = float_model_from(load_container(path));
  auto ra = param_refs(m);
  auto rb = param_refs(back);
  ASSERT_EQ(ra.size(), rb.size());
  for (size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].name, rb[i].name);
    EXPECT_EQ(*ra[i].data, *rb[i].data) << ra[i].name;
  }
}

TEST(Container, RejectsUnknownVersion) {
  auto m = init_model<float>(small_config(), 1);
  const auto path = (temp_dir() / "vbad.rntc").string();
  save_container(to_container(m), path);
  {
    std::fstream fs(path, std::ios::in | std::ios::out | std::ios::binary);
    fs.seekp(4);
    const uint32_t bad = 999;
    fs.write(reinterpret_cast<const char*>(&bad), 4);
  }
  EXPECT_THROW(load_container(path), IoError);
}

TEST(Container, RejectsBadMagic) {
  const auto path = (temp_dir() / "magic.rntc").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE then some bytes";
  }
  EXPECT_THROW(load_container(path), IoError);
}

TEST(Container, MissingTensorRejected) {
  auto m = init_model<float>(small_config(), 1);
  ModelContainer mc = to_container(m);
  mc.tensors.pop_back();
  EXPECT_THROW(float_model_from(mc), IoError);
}

}  // namespace
