#include <gtest/gtest.h>

#include "ocfr/pad.hpp"
#include "ocfr/rng.hpp"
#include "ocfr/types.hpp"

using namespace ocfr;

TEST(Grid, ConstructionAndAccess) {
  Grid<int> g(2, 3, 7);
  EXPECT_EQ(g.rows(), 2);
  EXPECT_EQ(g.cols(), 3);
  EXPECT_EQ(g.size(), 6u);
  g(1, 2) = 4;
  EXPECT_EQ(g.values()[5], 4);
  EXPECT_EQ(g.row(1)[2], 4);
  EXPECT_THROW(Grid<int>(2, 2, std::vector<int>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Grid<int>(-1, 2), ShapeError);
}

TEST(Tensor, LayoutIsNchw) {
  Tensor<float> t(2, 3, 4, 5);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.offset(1, 2, 3, 4), 119u);
  EXPECT_EQ(t.offset(0, 1, 0, 0), 20u);
  t.at(1, 0, 0, 0) = 3;
  EXPECT_EQ(t.sample(1).at(0, 0, 0, 0), 3);
  EXPECT_EQ(t.sample(1).shape(), (Shape4{1, 3, 4, 5}));
  EXPECT_EQ(t.shape().str(), "2@4x5x3");
}

TEST(Labels, RoundTripAndRejection) {
  for (auto l : {Label::bonafide, Label::presentation_attack}) EXPECT_EQ(parse_label(to_string(l)), l);
  EXPECT_THROW(parse_label("genuine"), InvalidArgument);
  for (auto h : {Layer::s, Layer::v, Layer::d}) EXPECT_EQ(parse_layer(layer_name(h)), h);
  EXPECT_EQ(class_of(Layer::s), 1);
  EXPECT_EQ(class_of(Layer::d), 3);
  EXPECT_THROW(parse_layer("x"), InvalidArgument);
}

TEST(BScan, SizeAndRangePredicates) {
  BScan raw{Grid<float>(kRawHeight, kRawWidth, 0.5f)};
  EXPECT_TRUE(raw.is_raw_size());
  EXPECT_FALSE(raw.is_network_size());
  EXPECT_TRUE(raw.is_normalized());
  raw.pixels(3, 3) = 1.5f;
  EXPECT_FALSE(raw.is_normalized());
  raw.pixels(3, 3) = std::nanf("");
  EXPECT_FALSE(raw.is_normalized());
}

TEST(AnnotationMask, ValidateAndCounts) {
  AnnotationMask m{Grid<std::uint8_t>(2, 3, 2)};
  m.labels(0, 0) = 0;
  m.labels(1, 2) = 3;
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.class_counts(), (std::vector<std::size_t>{1, 0, 4, 1}));
  m.labels(0, 1) = 4;
  EXPECT_THROW(m.validate(), InvalidArgument);
}

TEST(OctInstance, SliceCountOnlyEnforcedForFullFidelity) {
  OctInstance inst;
  EXPECT_THROW(inst.validate(false), InvalidArgument);
  for (int j = 1; j <= 3; ++j) inst.bscans.push_back({Grid<float>(4, 5), j});
  EXPECT_NO_THROW(inst.validate(false));
  EXPECT_THROW(inst.validate(true), ShapeError);
  inst.bscans.push_back({Grid<float>(4, 6), 4});
  EXPECT_THROW(inst.validate(false), ShapeError);
}

TEST(SegmentationOutput, ArgmaxPrefersLowestClassOnTies) {
  Tensor<float> p(1, 4, 1, 3, 0.25f);
  p.at(0, 2, 0, 1) = 0.4f;
  p.at(0, 3, 0, 2) = 0.9f;
  const auto m = SegmentationOutput{p}.argmax();
  EXPECT_EQ(m.labels(0, 0), 0);
  EXPECT_EQ(m.labels(0, 1), 2);
  EXPECT_EQ(m.labels(0, 2), 3);
}

TEST(LayerImage, ExportStretchesToFullRange) {
  LayerImage img{Grid<double>(1, 3, std::vector<double>{2, 4, 6}), Layer::v};
  const auto u8 = img.to_u8();
  EXPECT_EQ(u8.values(), (std::vector<std::uint8_t>{0, 128, 255}));
  LayerImage flat{Grid<double>(2, 2, 5.0), Layer::s};
  const auto flat_u8 = flat.to_u8();
  for (auto v : flat_u8.values()) EXPECT_EQ(v, 0);
}

TEST(LatentCode, PooledIsChannelMean) {
  Rng rng(9);
  const nn::NetworkConfig cfg;
  LatentCode z{Tensor<float>(1, 512, 8, 24), std::nullopt};
  for (auto& v : z.tensor.values()) v = static_cast<float>(rng.uniform(-2, 2));
  const auto pooled = pad::pool_latent(z, cfg);
  ASSERT_EQ(pooled.size(), 512u);
  for (int c = 0; c < 512; c += 37) {
    double s = 0;
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 24; ++x) s += z.tensor.at(0, c, y, x);
    EXPECT_NEAR(pooled[static_cast<std::size_t>(c)], s / 192, 1e-6);
  }
  LatentCode wrong{Tensor<float>(1, 512, 8, 23), std::nullopt};
  EXPECT_THROW(pad::pool_latent(wrong, cfg), ShapeError);
}

TEST(ReferenceCode, RejectsEmpty) {
  ReferenceCode r;
  EXPECT_THROW(r.validate(), InvalidArgument);
  r.pooled = {1.0};
  r.source_count = 1;
  EXPECT_NO_THROW(r.validate());
}

TEST(Rng, DeterministicAndSeedSensitive) {
  Rng a(5), b(5), c(6);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    (void)c.next_u64();
  }
  EXPECT_NE(Rng(5).next_u64(), Rng(6).next_u64());
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(77);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}
