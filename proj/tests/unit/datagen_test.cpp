#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <cstring>

#include "stackvet/datagen.hpp"

namespace stackvet {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "stackvet_datagen_test" / name;
  fs::remove_all(dir);
  return dir;
}

MultiDepthSample tiny(const std::string& id, int label, std::vector<float> values, std::size_t channels = 1) {
  MultiDepthSample s;
  s.id = id;
  s.source_id = id;
  s.label = label;
  s.combo = {32};
  const auto n = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(values.size() / channels))));
  s.channels = Tensor<float>({channels, n, n});
  std::copy(values.begin(), values.end(), s.channels.data());
  return s;
}

Dataset tiny_dataset(std::size_t n) {
  Dataset d;
  d.combo = {32};
  d.input_size = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = static_cast<float>(i);
    d.samples.push_back(tiny("t" + std::to_string(i), static_cast<int>(i % 2), {v, v + 1, v - 1, 2 * v}));
  }
  return d;
}

double stddev(const Tensor<float>& t) {
  double m = 0.0;
  for (float v : t.values()) m += v;
  m /= static_cast<double>(t.size());
  double ss = 0.0;
  for (float v : t.values()) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(t.size()));
}

float window_max(const Tensor<float>& img, std::ptrdiff_t cy, std::ptrdiff_t cx, std::ptrdiff_t half) {
  float best = -1e30f;
  const auto h = static_cast<std::ptrdiff_t>(img.dim(0)), w = static_cast<std::ptrdiff_t>(img.dim(1));
  for (auto y = std::max<std::ptrdiff_t>(0, cy - half); y <= std::min(h - 1, cy + half); ++y)
    for (auto x = std::max<std::ptrdiff_t>(0, cx - half); x <= std::min(w - 1, cx + half); ++x)
      best = std::max(best, img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)));
  return best;
}

TEST(Synth, NoiseFreeEmptySceneIsZero) {
  Scene scene;
  scene.noise_sigma = 0.0;
  Rng rng(1);
  const auto seq = synth_sequence(scene, rng);
  ASSERT_EQ(seq.frames.size(), kSequenceLength);
  for (const auto& f : seq.frames) {
    EXPECT_EQ(f.dims(), (Shape{52, 52}));
    for (float v : f.values()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Synth, StaticSourceKeepsPosition) {
  Scene scene;
  scene.noise_sigma = 0.0;
  scene.mover = Track{17.3, 30.8, {0.0, 0.0}, 5.0};
  Rng rng(2);
  const auto seq = synth_sequence(scene, rng);
  for (const auto& f : seq.frames) EXPECT_EQ(f, seq.frames[0]);
  std::size_t arg = 0;
  for (std::size_t p = 0; p < seq.frames[0].size(); ++p)
    if (seq.frames[0][p] > seq.frames[0][arg]) arg = p;
  EXPECT_EQ(arg / 52, 31u);
  EXPECT_EQ(arg % 52, 17u);
}

TEST(Synth, MovingPeakWithinFivePercent) {
  Scene scene;
  scene.noise_sigma = 0.0;
  scene.mover = Track{10.0, 20.0, {1.0, 0.0}, 4.0};
  Rng rng(3);
  const auto seq = synth_sequence(scene, rng);
  for (std::size_t k = 0; k < kSequenceLength; ++k) {
    float peak = 0.0f;
    for (float v : seq.frames[k].values()) peak = std::max(peak, v);
    EXPECT_NEAR(peak, 4.0, 0.05 * 4.0) << "frame " << k;
    EXPECT_EQ(seq.frames[k].at(20, 10 + k), peak);
  }
}

TEST(Synth, DeterministicPerSeed) {
  Scene scene;
  scene.stars.push_back({12.0, 40.0, 6.0});
  scene.mover = Track{20.0, 20.0, {0.3, -0.2}, 2.0};
  Rng a(9), b(9), c(10);
  const auto sa = synth_sequence(scene, a), sb = synth_sequence(scene, b), sc = synth_sequence(scene, c);
  EXPECT_EQ(sa.frames, sb.frames);
  EXPECT_NE(sa.frames, sc.frames);
}

TEST(Synth, TrackLeavingFrameThrows) {
  Scene scene;
  scene.mover = Track{40.0, 20.0, {1.0, 0.0}, 2.0};
  Rng rng(4);
  EXPECT_THROW(synth_sequence(scene, rng), ArgumentError);
  scene.mover = Track{20.0, 20.0, {0.0, 0.0}, 2.0};
  scene.psf_sigma = 0.0;
  EXPECT_THROW(synth_sequence(scene, rng), ArgumentError);
  scene.psf_sigma = 1.5;
  scene.noise_sigma = -1.0;
  EXPECT_THROW(synth_sequence(scene, rng), ArgumentError);
}

TEST(Median, OutlierRobust) {
  std::vector<double> v{1.0, 2.0, 100.0};
  EXPECT_EQ(median_of(v), 2.0);
  std::vector<double> even{4.0, 1.0, 3.0, 2.0};
  EXPECT_EQ(median_of(even), 2.5);
  std::vector<double> none;
  EXPECT_THROW(median_of(none), ArgumentError);
}

TEST(Median, CopiesOfOneFrameReturnIt) {
  Rng rng(5);
  Tensor<float> f({7, 5});
  for (auto& v : f.values()) v = static_cast<float>(rng.normal());
  const std::vector<Tensor<float>> copies(5, f);
  EXPECT_EQ(median_stack(copies), f);
}

TEST(ShiftStack, IdenticalFramesZeroVelocityGiveFrame) {
  Rng rng(6);
  Tensor<float> f({52, 52});
  for (auto& v : f.values()) v = static_cast<float>(rng.normal());
  FrameSequence seq;
  seq.frames.assign(kSequenceLength, f);
  for (std::size_t depth : {4u, 8u, 16u, 32u}) {
    const auto stacks = shift_stack(seq, {0.0, 0.0}, depth, 20);
    ASSERT_EQ(stacks.size(), kSequenceLength / depth);
    for (const auto& s : stacks)
      for (std::size_t r = 0; r < 20; ++r)
        for (std::size_t c = 0; c < 20; ++c) EXPECT_EQ(s.at(r, c), f.at(16 + r, 16 + c));
  }
}

TEST(ShiftStack, NonDivisorDepthThrows) {
  FrameSequence seq;
  seq.frames.assign(kSequenceLength, Tensor<float>({52, 52}));
  EXPECT_THROW(shift_stack(seq, {0.0, 0.0}, 3), ArgumentError);
  EXPECT_THROW(shift_stack(seq, {0.0, 0.0}, 0), ArgumentError);
  EXPECT_THROW(shift_stack(seq, {0.0, 0.0}, 4, 60), ArgumentError);
}

TEST(ShiftStack, MatchedVelocityRaisesSignalToNoise) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Scene scene;
    scene.mover = Track{25.5, 25.5, {0.4, 0.2}, 3.0};
    Rng rng(seed);
    const auto seq = synth_sequence(scene, rng);
    const double single = window_max(seq.frames[0], 25, 25, 2) / stddev(seq.frames[0]);
    const auto stacked = shift_stack(seq, {0.4, 0.2}, 32);
    const double deep = window_max(stacked[0], 10, 10, 2) / stddev(stacked[0]);
    EXPECT_GT(deep, single) << "seed " << seed;
  }
}

TEST(ShiftStack, MismatchedVelocityHasNoCentralPeak) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Scene scene;
    scene.mover = Track{25.5, 25.5, {0.5, 0.0}, 3.0};
    Rng rng(seed);
    const auto seq = synth_sequence(scene, rng);
    const auto matched = shift_stack(seq, {0.5, 0.0}, 32);
    const auto wrong = shift_stack(seq, {-1.5, 0.0}, 32);
    EXPECT_GT(window_max(matched[0], 10, 10, 2), 3.0 * stddev(matched[0])) << "seed " << seed;
    EXPECT_LT(window_max(wrong[0], 10, 10, 2), 3.0 * stddev(wrong[0])) << "seed " << seed;
  }
}

TEST(Combo, ChannelCounts) {
  EXPECT_EQ(channel_count(std::vector<int>{32}), 1u);
  EXPECT_EQ(channel_count(std::vector<int>{32, 16}), 3u);
  EXPECT_EQ(channel_count(std::vector<int>{32, 16, 8}), 7u);
  EXPECT_EQ(channel_count(std::vector<int>{32, 16, 8, 4}), 15u);
  EXPECT_EQ(channel_count(std::vector<int>{32, 4}), 9u);
  EXPECT_EQ(channel_depths(std::vector<int>{4, 32}), (std::vector<int>{32, 4, 4, 4, 4, 4, 4, 4, 4}));
}

TEST(Combo, ParseAndReject) {
  EXPECT_EQ(parse_combo("4,32"), (std::vector<int>{32, 4}));
  EXPECT_EQ(combo_string(parse_combo("32,16,8")), "32,16,8");
  EXPECT_THROW(parse_combo(""), ArgumentError);
  EXPECT_THROW(parse_combo("32,32"), ArgumentError);
  EXPECT_THROW(parse_combo("32,2"), ArgumentError);
  EXPECT_THROW(parse_combo("32,x"), ArgumentError);
  EXPECT_THROW(parse_combo("12"), ArgumentError);
}

TEST(Assemble, ChannelsAreBitwiseCopies) {
  Rng rng(7);
  std::vector<DepthStacks> stacks;
  for (int d : {4, 32}) {
    DepthStacks s{d, {}};
    for (std::size_t g = 0; g < kSequenceLength / static_cast<std::size_t>(d); ++g) {
      Tensor<float> t({20, 20});
      for (auto& v : t.values()) v = static_cast<float>(rng.normal());
      s.cutouts.push_back(t);
    }
    stacks.push_back(s);
  }
  const auto sample = assemble_sample(stacks, std::vector<int>{4, 32}, "x", 1);
  ASSERT_EQ(sample.channels.dims(), (Shape{9, 20, 20}));
  EXPECT_EQ(sample.combo, (std::vector<int>{32, 4}));
  EXPECT_EQ(std::memcmp(sample.channels.data(), stacks[1].cutouts[0].data(), 400 * sizeof(float)), 0);
  for (std::size_t g = 0; g < 8; ++g)
    EXPECT_EQ(std::memcmp(sample.channels.data() + (1 + g) * 400, stacks[0].cutouts[g].data(), 400 * sizeof(float)),
              0);
  const auto one = assemble_sample(stacks, std::vector<int>{32}, "y", 0);
  EXPECT_EQ(one.channels.dim(0), 1u);
  EXPECT_THROW(assemble_sample(stacks, std::vector<int>{16}, "z", 0), ArgumentError);
}

TEST(Augment, GroupIdentities) {
  Rng rng(8);
  Tensor<float> t({3, 5, 5});
  for (auto& v : t.values()) v = static_cast<float>(rng.normal());
  EXPECT_EQ(apply_transform(apply_transform(t, Transform::hflip), Transform::hflip), t);
  EXPECT_EQ(apply_transform(apply_transform(t, Transform::vflip), Transform::vflip), t);
  Tensor<float> r = t;
  for (int i = 0; i < 4; ++i) r = apply_transform(r, Transform::rot90);
  EXPECT_EQ(r, t);
  EXPECT_EQ(apply_transform(t, Transform::rot180), apply_transform(apply_transform(t, Transform::vflip), Transform::hflip));
  EXPECT_EQ(apply_transform(apply_transform(t, Transform::rot90), Transform::rot90), apply_transform(t, Transform::rot180));
  EXPECT_EQ(apply_transform(t, Transform::rot270),
            apply_transform(apply_transform(t, Transform::rot180), Transform::rot90));
  EXPECT_NE(apply_transform(t, Transform::rot90), t);
}

TEST(Augment, RotationIsCounterClockwise) {
  const auto s = tiny("r", 1, {1, 2, 3, 4});
  const auto r = apply_transform(s.channels, Transform::rot90);
  EXPECT_EQ(r.values()[0], 2.0f);
  EXPECT_EQ(r.values()[1], 4.0f);
  EXPECT_EQ(r.values()[2], 1.0f);
  EXPECT_EQ(r.values()[3], 3.0f);
}

TEST(Augment, SixfoldCountsAndLabels) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < 1966; ++i) {
    const auto variants = augment(tiny("a" + std::to_string(i), static_cast<int>(i % 2), {1, 2, 3, 4}));
    for (const auto& v : variants) {
      EXPECT_EQ(v.label, static_cast<int>(i % 2));
      EXPECT_EQ(v.source_id, "a" + std::to_string(i));
    }
    total += variants.size();
  }
  EXPECT_EQ(total, 11796u);
  const auto v = augment(tiny("q", 1, {1, 2, 3, 4}));
  std::set<std::string> names;
  for (const auto& s : v) names.insert(s.transform);
  EXPECT_EQ(names, (std::set<std::string>{"identity", "rot90", "rot180", "rot270", "hflip", "vflip"}));
  EXPECT_EQ(v[0].channels, tiny("q", 1, {1, 2, 3, 4}).channels);
  EXPECT_EQ(v[4].id, "q-hflip");
  EXPECT_THROW(apply_transform(Tensor<float>({1, 2, 3}), Transform::rot90), ShapeError);
}

TEST(Permute, SingleChannelUnchangedAndMultisetPreserved) {
  Rng rng(9);
  const auto one = tiny("o", 0, {1, 2, 3, 4});
  EXPECT_EQ(permute_channels(one, rng).channels, one.channels);
  const auto many = tiny("m", 0, {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3}, 4);
  const auto p = permute_channels(many, rng);
  std::multiset<float> a(many.channels.values().begin(), many.channels.values().end());
  std::multiset<float> b(p.channels.values().begin(), p.channels.values().end());
  EXPECT_EQ(a, b);
  Rng x(11), y(11);
  EXPECT_EQ(permute_channels(many, x).channels, permute_channels(many, y).channels);
}

TEST(Permute, OrderingsAreUniform) {
  Rng rng(10);
  const auto s = tiny("p", 0, {0, 1, 2}, 3);
  std::map<std::vector<float>, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto p = permute_channels(s, rng);
    counts[{p.channels.values().begin(), p.channels.values().end()}]++;
  }
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [order, n] : counts) EXPECT_NEAR(static_cast<double>(n) / draws, 1.0 / 6.0, 0.02);
}

TEST(Standardize, TwoValues) {
  Dataset d;
  d.combo = {32};
  d.input_size = 1;
  d.samples.push_back(tiny("a", 0, {0}));
  d.samples.push_back(tiny("b", 1, {2}));
  const auto stats = standardize(d);
  EXPECT_EQ(stats.mean, 1.0);
  EXPECT_EQ(stats.std, 1.0);
  EXPECT_EQ(d.samples[0].channels.values()[0], -1.0f);
  EXPECT_EQ(d.samples[1].channels.values()[0], 1.0f);
  ASSERT_TRUE(d.standardization);
}

TEST(Standardize, RandomDataAndIdempotence) {
  Dataset d;
  d.combo = {32};
  d.input_size = 4;
  Rng rng(12);
  for (int i = 0; i < 30; ++i) {
    std::vector<float> v(16);
    for (auto& x : v) x = static_cast<float>(rng.normal(3.0, 5.0));
    d.samples.push_back(tiny("r" + std::to_string(i), i % 2, v));
  }
  standardize(d);
  double m = 0.0, ss = 0.0;
  for (const auto& s : d.samples)
    for (float v : s.channels.values()) m += v;
  m /= 480.0;
  for (const auto& s : d.samples)
    for (float v : s.channels.values()) ss += (v - m) * (v - m);
  EXPECT_LT(std::abs(m), 1e-6);
  EXPECT_LT(std::abs(ss / 480.0 - 1.0), 1e-4);
  const Dataset before = d;
  standardize(d);
  for (std::size_t i = 0; i < d.samples.size(); ++i)
    for (std::size_t k = 0; k < 16; ++k)
      EXPECT_NEAR(d.samples[i].channels.values()[k], before.samples[i].channels.values()[k], 1e-6);
}

TEST(Standardize, ZeroVarianceThrows) {
  Dataset d;
  d.combo = {32};
  d.input_size = 2;
  d.samples.push_back(tiny("a", 0, {3, 3, 3, 3}));
  EXPECT_THROW(standardize(d), ArgumentError);
}

TEST(Split, SevenOneTwo) {
  const auto d = tiny_dataset(100);
  const auto s = split(d, 42);
  EXPECT_EQ(s.train.size(), 70u);
  EXPECT_EQ(s.validation.size(), 10u);
  EXPECT_EQ(s.test.size(), 20u);
  std::set<std::string> all;
  for (const auto* part : {&s.train, &s.validation, &s.test})
    for (const auto& id : *part) EXPECT_TRUE(all.insert(id).second) << id;
  EXPECT_EQ(all.size(), 100u);
  const auto again = split(d, 42);
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(again.test, s.test);
  EXPECT_NE(split(d, 43).test, s.test);
  EXPECT_THROW(split(tiny_dataset(9), 1), ArgumentError);
}

TEST(Split, RemainderGoesToTrain) {
  const auto s = split(tiny_dataset(37), 1);
  EXPECT_EQ(s.validation.size(), 3u);
  EXPECT_EQ(s.test.size(), 7u);
  EXPECT_EQ(s.train.size(), 27u);
}

TEST(Split, AugmentedVariantsStayTogether) {
  Dataset d;
  d.combo = {32};
  d.input_size = 2;
  for (const auto& base : tiny_dataset(20).samples)
    for (auto& v : augment(base)) d.samples.push_back(std::move(v));
  const auto s = split(d, 5);
  std::map<std::string, int> where;
  int part = 0;
  for (const auto* ids : {&s.train, &s.validation, &s.test}) {
    for (const auto& id : *ids) {
      const auto& src = d.samples[*d.index_of(id)].source_id;
      const auto [it, fresh] = where.emplace(src, part);
      EXPECT_EQ(it->second, part) << src;
    }
    ++part;
  }
  EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), 120u);
  EXPECT_EQ(s.test.size(), 24u);
}

TEST(DatasetIo, RoundTrip) {
  GeneratorConfig cfg;
  cfg.samples = 12;
  cfg.seed = 3;
  auto d = generate_dataset(cfg);
  standardize(d);
  const auto dir = temp_dir("roundtrip");
  write_dataset(d, dir);
  const auto back = read_dataset(dir);
  EXPECT_EQ(back.combo, d.combo);
  EXPECT_EQ(back.input_size, d.input_size);
  ASSERT_TRUE(back.standardization);
  EXPECT_EQ(back.standardization->mean, d.standardization->mean);
  EXPECT_EQ(back.standardization->std, d.standardization->std);
  EXPECT_EQ(back.generator, d.generator);
  ASSERT_EQ(back.samples.size(), d.samples.size());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].id, d.samples[i].id);
    EXPECT_EQ(back.samples[i].label, d.samples[i].label);
    EXPECT_EQ(back.samples[i].channels, d.samples[i].channels);
  }
  const Json manifest = Json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["summary"]["objects"].get<std::size_t>(), d.positives());
  EXPECT_EQ(manifest["summary"]["false_positives"].get<std::size_t>(), d.negatives());
}

TEST(DatasetIo, MatchesGoldenFixture) {
  Dataset d;
  d.combo = {32};
  d.input_size = 2;
  d.standardization = Standardization{0.5, 2.0};
  d.samples.push_back(tiny("a", 1, {1.0f, -2.5f, 0.0f, 0.5f}));
  d.samples.push_back(tiny("b", 0, {2.0f, 0.0f, 0.0f, -1.0f}));
  const auto dir = temp_dir("golden");
  write_dataset(d, dir);
  const fs::path golden = STACKVET_GOLDEN_DIR "/dataset2";
  for (const char* f : {"manifest.json", "tensors/a.mdt", "tensors/b.mdt"})
    EXPECT_EQ(slurp(dir / f), slurp(golden / f)) << f;
  const auto back = read_dataset(golden);
  ASSERT_EQ(back.samples.size(), 2u);
  EXPECT_EQ(back.samples[0].channels, d.samples[0].channels);
  EXPECT_EQ(back.samples[1].label, 0);
}

TEST(DatasetIo, InconsistencyIsFormatError) {
  const auto d = tiny_dataset(3);
  const auto dir = temp_dir("broken");
  write_dataset(d, dir);
  auto text = slurp(dir / "manifest.json");
  auto m = Json::parse(text);
  m["summary"]["objects"] = 99;
  write_text_file(dir / "manifest.json", m.dump());
  EXPECT_THROW(read_dataset(dir), FormatError);
  m = Json::parse(text);
  m["channels"] = 9;
  write_text_file(dir / "manifest.json", m.dump());
  EXPECT_THROW(read_dataset(dir), FormatError);
  write_text_file(dir / "manifest.json", text);
  fs::remove(dir / "tensors" / "t1.mdt");
  EXPECT_THROW(read_dataset(dir), Error);
  write_text_file(dir / "manifest.json", "{not json");
  EXPECT_THROW(read_dataset(dir), FormatError);
}

TEST(Generate, DeterministicAndBalanced) {
  GeneratorConfig cfg;
  cfg.samples = 40;
  cfg.seed = 11;
  const auto a = generate_dataset(cfg);
  const auto b = generate_dataset(cfg);
  ASSERT_EQ(a.samples.size(), 40u);
  EXPECT_EQ(a.positives(), 30u);
  EXPECT_EQ(a.channels(), 9u);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].id, b.samples[i].id);
    EXPECT_EQ(a.samples[i].label, b.samples[i].label);
    EXPECT_EQ(a.samples[i].channels, b.samples[i].channels);
    EXPECT_EQ(a.samples[i].channels.dims(), (Shape{9, 20, 20}));
  }
  cfg.seed = 12;
  EXPECT_NE(generate_dataset(cfg).samples[0].channels, a.samples[0].channels);
}

TEST(Generate, AugmentAndPermute) {
  GeneratorConfig cfg;
  cfg.samples = 5;
  cfg.combo = {32, 16};
  cfg.augment = true;
  cfg.permute_channels = true;
  const auto d = generate_dataset(cfg);
  EXPECT_EQ(d.samples.size(), 30u);
  EXPECT_EQ(source_ids(d).size(), 5u);
  EXPECT_EQ(d.channels(), 3u);
  EXPECT_EQ(d.generator["augment"], true);
}

TEST(Generate, RejectsBadConfig) {
  GeneratorConfig cfg;
  cfg.samples = 0;
  EXPECT_THROW(generate_dataset(cfg), ArgumentError);
  cfg.samples = 10;
  cfg.positive_fraction = 1.5;
  EXPECT_THROW(generate_dataset(cfg), ArgumentError);
  cfg.positive_fraction = 0.5;
  cfg.max_speed = 2.0;
  EXPECT_THROW(generate_dataset(cfg), ArgumentError);
  cfg.max_speed = 0.5;
  cfg.combo = {32, 3};
  EXPECT_THROW(generate_dataset(cfg), ArgumentError);
}

}  // namespace
}  // namespace stackvet
