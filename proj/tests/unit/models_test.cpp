#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "stackvet/models.hpp"

namespace stackvet {
namespace {

namespace fs = std::filesystem;

Tensor<float> random_batch(std::size_t n, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor<float> t({n, c, 20, 20});
  for (auto& v : t.values()) v = static_cast<float>(rng.normal() * scale);
  return t;
}

Model<float> make(const std::string& id, std::size_t in, bool cbam = true, std::uint64_t seed = 1) {
  Rng rng(seed);
  return build_model<float>(make_spec(id, in, cbam), rng);
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "stackvet_models_test";
  fs::create_directories(dir);
  return dir / name;
}

TEST(ModelSpec, TableChannelPlans) {
  EXPECT_EQ(channel_plan_for("CNN1"), (std::vector<std::size_t>{32, 64}));
  EXPECT_EQ(channel_plan_for("cnn2"), (std::vector<std::size_t>{64, 128}));
  EXPECT_EQ(channel_plan_for("CNN3"), (std::vector<std::size_t>{32, 32, 64, 64}));
  EXPECT_EQ(channel_plan_for("CNN4"), (std::vector<std::size_t>{64, 64, 128, 128}));
  EXPECT_EQ(channel_plan_for("CNN5"), (std::vector<std::size_t>{32, 64, 128, 256}));
  EXPECT_EQ(channel_plan_for("CNN6"), (std::vector<std::size_t>{64, 128, 256, 512}));
  EXPECT_THROW(channel_plan_for("CNN7"), ArgumentError);
  ModelSpec bad = make_spec("CNN1", 3);
  bad.channel_plan = {32, 65};
  EXPECT_THROW(validate_spec(bad), ArgumentError);
}

TEST(ModelSpec, JsonRoundTrip) {
  auto spec = make_spec("cnn5", 9, false);
  spec.dropout_rate = 0.3;
  EXPECT_EQ(spec_from_json(spec_to_json(spec)), spec);
  EXPECT_EQ(spec.model_id, "CNN5");
  auto other = spec;
  other.input_channels = 7;
  EXPECT_NE(spec_hash(spec), spec_hash(other));
}

TEST(BuildModel, BlockStructure) {
  const auto cnn1 = make("CNN1", 3);
  ASSERT_EQ(cnn1.blocks.size(), 2u);
  EXPECT_EQ(cnn1.blocks[0].weight.value.dims(), (Shape{32, 3, 3, 3}));
  EXPECT_EQ(cnn1.blocks[1].weight.value.dims(), (Shape{64, 32, 3, 3}));
  EXPECT_EQ(cnn1.final_size(), 5u);

  const auto cnn6 = make("CNN6", 9);
  ASSERT_EQ(cnn6.blocks.size(), 4u);
  const std::size_t expected[4] = {64, 128, 256, 512};
  const bool pools[4] = {true, true, false, false};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(cnn6.blocks[i].weight.value.dim(0), expected[i]);
    EXPECT_EQ(cnn6.blocks[i].pool, pools[i]);
    EXPECT_TRUE(cnn6.blocks[i].attention.has_value());
  }
  EXPECT_EQ(cnn6.head_weight.value.dims(), (Shape{1, 512 * 25}));
}

TEST(BuildModel, SameSeedSameParameters) {
  const auto a = make("CNN3", 9, true, 42), b = make("CNN3", 9, true, 42), c = make("CNN3", 9, true, 43);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool all_same_c = true;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    all_same_c = all_same_c && pa[i]->value == pc[i]->value;
  }
  EXPECT_FALSE(all_same_c);
}

TEST(Predict, ZeroHeadGivesHalf) {
  auto m = make("CNN1", 3);
  m.head_weight.value.fill(0.0f);
  m.head_bias.value.fill(0.0f);
  const auto p = predict(m, random_batch(4, 3, 1));
  ASSERT_EQ(p.dims(), (Shape{4}));
  for (float v : p.values()) EXPECT_EQ(v, 0.5f);
}

TEST(Predict, InferDeterministicAndTrainDiffers) {
  auto m = make("CNN3", 2);
  const auto x = random_batch(6, 2, 2);
  const auto a = predict(m, x), b = predict(m, x, 4);
  EXPECT_EQ(a, b);
  Rng rng(5);
  const auto t = predict_train_mode(m, x, rng);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(std::isfinite(t[i]));
    differs = differs || t[i] != a[i];
  }
  EXPECT_TRUE(differs);
}

TEST(Predict, StrictlyInsideUnitInterval) {
  for (const char* id : {"CNN1", "CNN3", "CNN5"}) {
    auto m = make(id, 1, true, 9);
    for (double scale : {1.0, 100.0, 1e6}) {
      for (const auto probs = predict(m, random_batch(3, 1, 4, scale)); float v : probs.values()) {
        EXPECT_GT(v, 0.0f);
        EXPECT_LT(v, 1.0f);
      }
    }
  }
}

TEST(Predict, ChannelMismatchNamesCounts) {
  const auto m = make("CNN1", 3);
  try {
    predict(m, random_batch(1, 9, 1));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("found 9"), std::string::npos) << msg;
  }
}

TEST(ParamCount, AnalyticSpotChecks) {
  Parameter<float> w("w", Tensor<float>({1, 10})), b("b", Tensor<float>({1}));
  EXPECT_EQ(param_count({&w, &b}), 11u);

  auto spec = make_spec("CNN1", 3, false);
  spec.conv_bias = true;
  Rng rng(1);
  const auto m = build_model<float>(spec, rng);
  EXPECT_EQ(param_count({&m.blocks[0].weight, &*m.blocks[0].bias}), 896u);  // 3*3*3*32 + 32

  // CNN1 with CBAM, 3 input channels, no conv bias:
  //   block0 conv 864 + bn 64 + cbam (2*32 + 32*2 + 98)
  //   block1 conv 18432 + bn 128 + cbam (4*64 + 64*4 + 98)
  //   head 64*5*5 + 1
  const std::size_t expected = (864 + 64 + 226) + (18432 + 128 + 610) + 1601;
  EXPECT_EQ(param_count(make("CNN1", 3)), expected);
}

TEST(ParamCount, TableOrderingAndAblation) {
  for (std::size_t in : {1u, 3u, 9u, 15u}) {
    std::vector<std::size_t> counts;
    for (const char* id : {"CNN1", "CNN3", "CNN2", "CNN4", "CNN5", "CNN6"}) counts.push_back(param_count(make(id, in)));
    for (std::size_t i = 1; i < counts.size(); ++i) EXPECT_LT(counts[i - 1], counts[i]) << "in=" << in;
    for (const char* id : {"CNN1", "CNN2", "CNN3", "CNN4", "CNN5", "CNN6"})
      EXPECT_LT(param_count(make(id, in, false)), param_count(make(id, in, true)));
  }
}

TEST(ModelFile, RoundTripPreservesPredictions) {
  const auto m = make("CNN3", 9, true, 7);
  const auto path = temp_file("roundtrip.mdl");
  ModelFileExtras extras;
  extras.metadata = {{"train_auc", 0.5}};
  extras.tensors.emplace_back("extra", Tensor<float>({2}, std::vector<float>{1, 2}));
  save_model(m, path, extras);
  ModelFileExtras back;
  const auto loaded = load_model(path, &back);
  EXPECT_EQ(loaded.spec, m.spec);
  const auto pa = m.parameters(), pb = loaded.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  const auto x = random_batch(5, 9, 3);
  EXPECT_EQ(predict(m, x), predict(loaded, x));
  EXPECT_EQ(back.metadata, extras.metadata);
  ASSERT_EQ(back.tensors.size(), 1u);
  EXPECT_EQ(back.tensors[0].second, extras.tensors[0].second);
}

TEST(ModelFile, CorruptFilesRejected) {
  const auto m = make("CNN1", 1);
  const auto path = temp_file("corrupt.mdl");
  save_model(m, path);
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << b;
  };
  write(bytes.substr(0, bytes.size() - 10));
  EXPECT_THROW(load_model(path), FormatError);

  std::string tampered = bytes;
  const auto pos = tampered.find("\"input_channels\":1");
  ASSERT_NE(pos, std::string::npos);
  tampered[pos + 17] = '2';
  write(tampered);
  EXPECT_THROW(load_model(path), FormatError);

  std::string version = bytes;
  version[4] = '2';
  write(version);
  EXPECT_THROW(load_model(path), FormatError);

  write(bytes + "x");
  EXPECT_THROW(load_model(path), FormatError);
}

}  // namespace
}  // namespace stackvet
