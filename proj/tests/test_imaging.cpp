#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "ocfr/imaging.hpp"
#include "ocfr/rng.hpp"

using namespace ocfr;

TEST(Normalize, ConstantBecomesZero) {
  const auto out = normalize_bscan(BScan{Grid<float>(5, 7, 37.0f), 3});
  EXPECT_EQ(out.slice_index, 3);
  for (float v : out.pixels.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Normalize, ZeroTo255IsScaled) {
  Grid<float> g(16, 16);
  for (int i = 0; i < 256; ++i) g.values()[static_cast<std::size_t>(i)] = static_cast<float>(i);
  const auto out = normalize_bscan(BScan{g});
  for (int i = 0; i < 256; ++i) EXPECT_FLOAT_EQ(out.pixels.values()[static_cast<std::size_t>(i)], i / 255.0f);
}

TEST(Normalize, RandomMatchesScalarLoop) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Grid<float> g(4, 4);
    for (auto& v : g.values()) v = static_cast<float>(rng.uniform(-50, 300));
    double lo = 1e9, hi = -1e9;
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        lo = std::min(lo, static_cast<double>(g(y, x)));
        hi = std::max(hi, static_cast<double>(g(y, x)));
      }
    const auto out = normalize_bscan(BScan{g});
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) EXPECT_NEAR(out.pixels(y, x), (g(y, x) - lo) / (hi - lo), 1e-6);
    EXPECT_TRUE(out.is_normalized());
  }
}

TEST(Normalize, RejectsNonFiniteNamingThePixel) {
  Grid<float> g(3, 4, 1.0f);
  g(2, 1) = std::numeric_limits<float>::infinity();
  try {
    normalize_bscan(BScan{g, 12});
    FAIL() << "expected rejection";
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("slice 12"), std::string::npos) << msg;
  }
}

TEST(Resize, ConstantStaysConstant) {
  const auto [b, m] = resize_to_network(BScan{Grid<float>(kRawHeight, kRawWidth, 0.3f)}, std::nullopt);
  EXPECT_TRUE(b.is_network_size());
  EXPECT_FALSE(m.has_value());
  for (float v : b.pixels.values()) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(Resize, UniformMaskStaysUniform) {
  const AnnotationMask mask{Grid<std::uint8_t>(kRawHeight, kRawWidth, 2)};
  const auto [b, m] = resize_to_network(BScan{Grid<float>(kRawHeight, kRawWidth)}, mask);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->rows(), kNetHeight);
  EXPECT_EQ(m->cols(), kNetWidth);
  for (auto v : m->labels.values()) EXPECT_EQ(v, 2);
}

TEST(Resize, CheckerboardHalvedMatchesBilinearFormula) {
  Grid<float> g(4, 6);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) g(y, x) = static_cast<float>((x + y) % 2);
  const auto out = resize_bilinear(g, 2, 3);
  // Half-pixel centres: output (i, j) samples source (2i + 0.5, 2j + 0.5), the midpoint of a
  // 2x2 block, i.e. the mean of two zeros and two ones.
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) {
      const double sy = 2 * y + 0.5, sx = 2 * x + 0.5;
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const double fy = sy - y0, fx = sx - x0;
      const double want = (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x0 + 1)) + fy * ((1 - fx) * g(y0 + 1, x0) + fx * g(y0 + 1, x0 + 1));
      EXPECT_NEAR(out(y, x), want, 1e-6);
      EXPECT_NEAR(out(y, x), 0.5, 1e-6);
    }
}

TEST(Resize, UpsamplingClampsAtEdges) {
  Grid<float> g(1, 2, std::vector<float>{0, 1});
  const auto out = resize_bilinear(g, 1, 4);
  EXPECT_EQ(out.values(), (std::vector<float>{0, 0.25f, 0.75f, 1}));
}

TEST(Resize, MaskLabelsStayClosed) {
  Rng rng(8);
  Grid<std::uint8_t> g(50, 150);
  for (auto& v : g.values()) v = static_cast<std::uint8_t>(rng.below(4));
  const auto [b, m] = resize_to_network(BScan{Grid<float>(50, 150)}, AnnotationMask{g}, 32, 96);
  for (auto v : m->labels.values()) EXPECT_LT(v, 4);
  EXPECT_NO_THROW(m->validate());
}

TEST(Resize, RejectsMismatchedMask) {
  EXPECT_THROW(resize_to_network(BScan{Grid<float>(10, 10)}, AnnotationMask{Grid<std::uint8_t>(10, 11)}), ShapeError);
}

TEST(NetworkInput, GrayIsReplicatedIntoThreeChannels) {
  BScan a{Grid<float>(2, 3, 0.25f)}, b{Grid<float>(2, 3, 0.75f)};
  const auto x = to_network_input<float>(std::vector<const BScan*>{&a, &b});
  EXPECT_EQ(x.shape(), (Shape4{2, 3, 2, 3}));
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(x.at(0, c, 1, 2), 0.25f);
    EXPECT_EQ(x.at(1, c, 0, 0), 0.75f);
  }
  BScan odd{Grid<float>(2, 4)};
  EXPECT_THROW(to_network_input<float>(std::vector<const BScan*>{&a, &odd}), ShapeError);
}
