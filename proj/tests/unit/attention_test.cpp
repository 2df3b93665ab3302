#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

namespace stackvet {
namespace {

using stackvet::testing::cbam_oracle;
using stackvet::testing::channel_attention_oracle;
using stackvet::testing::spatial_attention_oracle;

Tensor<double> random_image(std::uint64_t seed, std::size_t c, std::size_t h, std::size_t w) {
  Rng rng(seed);
  Tensor<double> t({c, h, w});
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

CbamParams<double> random_params(std::size_t c, std::uint64_t seed, std::size_t r = 2) {
  Rng rng(seed);
  return make_cbam<double>(c, CbamConfig{r, false}, rng);
}

template <typename Fn>
Tensor<double> run(const Tensor<double>& f, CbamParams<double>& p, Fn fn) {
  Tape<double> tape;
  return tape.value(fn(tape, tape.constant(f), p));
}

TEST(Cbam, HiddenWidthClampsToOne) {
  EXPECT_EQ(cbam_hidden_width(32, 16), 2u);
  EXPECT_EQ(cbam_hidden_width(64, 16), 4u);
  EXPECT_EQ(cbam_hidden_width(8, 16), 1u);
  auto p = random_params(32, 1, 16);
  EXPECT_EQ(p.w0.value.dims(), (Shape{2, 32}));
  EXPECT_EQ(p.w1.value.dims(), (Shape{32, 2}));
  EXPECT_EQ(p.conv7.value.dims(), (Shape{1, 2, 7, 7}));
  EXPECT_THROW(cbam_hidden_width(4, 0), ArgumentError);
}

TEST(Cbam, InitWithinFanInBound) {
  auto p = random_params(20, 3, 4);
  for (double v : p.w0.value.values()) EXPECT_LE(std::abs(v), std::sqrt(1.0 / 20));
  for (double v : p.w1.value.values()) EXPECT_LE(std::abs(v), std::sqrt(1.0 / 5));
  for (double v : p.conv7.value.values()) EXPECT_LE(std::abs(v), std::sqrt(1.0 / 98));
}

TEST(ChannelAttention, ZeroWeightsGiveHalf) {
  auto p = random_params(3, 1);
  p.w0.value.fill(0.0);
  p.w1.value.fill(0.0);
  const auto mc = run(random_image(2, 3, 4, 4), p, channel_attention<double>);
  ASSERT_EQ(mc.dims(), (Shape{3, 1, 1}));
  for (double v : mc.values()) EXPECT_EQ(v, 0.5);
}

TEST(ChannelAttention, ConstantChannelsUseDoubledMlp) {
  auto p = random_params(4, 5);
  Tensor<double> f({4, 3, 3});
  const double level[4] = {0.3, -1.2, 2.0, 0.0};
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t k = 0; k < 9; ++k) f[c * 9 + k] = level[c];
  const auto mc = run(f, p, channel_attention<double>);
  // sigma(2 * MLP(level)), computed by hand here.
  for (std::size_t c = 0; c < 4; ++c) {
    double out = 0.0;
    for (std::size_t j = 0; j < p.hidden(); ++j) {
      double h = 0.0;
      for (std::size_t k = 0; k < 4; ++k) h += p.w0.value[j * 4 + k] * level[k];
      out += p.w1.value[c * p.hidden() + j] * std::max(0.0, h);
    }
    EXPECT_NEAR(mc[c], 1.0 / (1.0 + std::exp(-2.0 * out)), 1e-14);
  }
}

TEST(ChannelAttention, MatchesStraightLineOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = random_params(2, seed + 10, 1);
    const auto f = random_image(seed, 2, 4, 4);
    const auto mc = run(f, p, channel_attention<double>);
    const auto oracle = channel_attention_oracle(f, p);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(mc[c], oracle[c], 1e-10);
  }
}

TEST(ChannelAttention, ChannelMismatchRejected) {
  auto p = random_params(3, 1);
  EXPECT_THROW(run(random_image(1, 4, 4, 4), p, channel_attention<double>), ShapeError);
}

TEST(ChannelAttention, BatchedMatchesPerImage) {
  auto p = random_params(3, 2);
  Tensor<double> batch({2, 3, 5, 5});
  const auto a = random_image(1, 3, 5, 5), b = random_image(2, 3, 5, 5);
  std::copy(a.values().begin(), a.values().end(), batch.data());
  std::copy(b.values().begin(), b.values().end(), batch.data() + 75);
  const auto mc = run(batch, p, channel_attention<double>);
  ASSERT_EQ(mc.dims(), (Shape{2, 3, 1, 1}));
  const auto ra = channel_attention_oracle(a, p), rb = channel_attention_oracle(b, p);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_NEAR(mc[c], ra[c], 1e-12);
    EXPECT_NEAR(mc[3 + c], rb[c], 1e-12);
  }
}

TEST(SpatialAttention, ZeroKernelGivesHalf) {
  auto p = random_params(3, 1);
  p.conv7.value.fill(0.0);
  const auto ms = run(random_image(3, 3, 6, 5), p, spatial_attention<double>);
  ASSERT_EQ(ms.dims(), (Shape{1, 6, 5}));
  for (double v : ms.values()) EXPECT_EQ(v, 0.5);
}

TEST(SpatialAttention, SingleChannelAvgEqualsMax) {
  // With C = 1 both pooled maps equal f, so only the summed kernel matters.
  auto p = random_params(1, 4, 1);
  auto q = p;
  for (std::size_t k = 0; k < 49; ++k) {
    q.conv7.value[k] = p.conv7.value[k] + p.conv7.value[49 + k];
    q.conv7.value[49 + k] = 0.0;
  }
  const auto f = random_image(5, 1, 8, 8);
  const auto a = run(f, p, spatial_attention<double>), b = run(f, q, spatial_attention<double>);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(SpatialAttention, MatchesLoopOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = random_params(3, seed + 20);
    const auto f = random_image(seed, 3, 8, 8);
    const auto ms = run(f, p, spatial_attention<double>);
    const auto oracle = spatial_attention_oracle(f, p);
    for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(ms[i], oracle[i], 1e-10);
  }
}

TEST(CbamModule, ZeroWeightsQuarterInput) {
  auto p = random_params(4, 1);
  for (auto* q : p.parameters()) q->value.fill(0.0);
  const auto f = random_image(7, 4, 5, 5);
  EXPECT_EQ(p.parameters().size(), 3u);
  const auto out = run(f, p, cbam<double>);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(out[i], 0.25 * f[i]);
}

TEST(CbamModule, ZeroInputZeroOutput) {
  auto p = random_params(4, 1);
  const auto out = run(Tensor<double>({4, 5, 5}), p, cbam<double>);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(CbamModule, MatchesComposedOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto p = make_cbam<double>(5, CbamConfig{2, true}, rng);
    for (auto* q : p.parameters())
      for (auto& v : q->value.values()) v = rng.uniform(-1.0, 1.0);
    const auto f = random_image(seed + 40, 5, 6, 7);
    const auto out = run(f, p, cbam<double>);
    const auto oracle = cbam_oracle(f, p);
    for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(out[i], oracle[i], 1e-10);
  }
}

TEST(CbamModule, PropertySuite) {
  const auto r = stackvet::testing::cbam_properties(100, 11);
  EXPECT_TRUE(r.ok) << r.detail;
}

}  // namespace
}  // namespace stackvet
