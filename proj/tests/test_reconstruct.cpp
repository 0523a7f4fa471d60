#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "ocfr/imaging.hpp"
#include "ocfr/phantom.hpp"
#include "ocfr/reconstruct.hpp"

using namespace ocfr;
using namespace ocfr::recon;

namespace {

Grid<double> smooth_test_image() {
  Grid<double> x(21, 34);
  for (int y = 0; y < 21; ++y)
    for (int c = 0; c < 34; ++c) x(y, c) = std::sin(0.37 * y + 0.11 * c * c) * 0.4 + 0.5 + 0.05 * std::cos(1.3 * y * c);
  return x;
}

BScan flat_scan(int rows, int cols, std::vector<int> surface) {
  BScan b{Grid<float>(rows, cols, 0.0f), 1};
  for (int c = 0; c < cols; ++c)
    for (int y = surface[c]; y < rows; ++y) b.pixels(y, c) = 0.25f + 0.5f * ((y - surface[c]) % 7 == 0);
  return b;
}

AnnotationMask banded_mask(int rows, int cols, const std::vector<int>& surface, int thickness = 5) {
  AnnotationMask m{Grid<std::uint8_t>(rows, cols, 0)};
  for (int c = 0; c < cols; ++c)
    for (int y = surface[c]; y < rows; ++y) m.labels(y, c) = static_cast<std::uint8_t>(std::min(3, 1 + (y - surface[c]) / thickness));
  return m;
}

double pearson(const Grid<double>& a, const Grid<std::uint8_t>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a.values()[i];
    mb += b.values()[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.values()[i] - ma, y = b.values()[i] - mb;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

// Reference values computed with PyWavelets 1.8 (wavedec2/waverec2, 'db2', mode='symmetric').
TEST(Wavelet, MatchesReferenceImplementation) {
  const auto x = smooth_test_image();
  const auto d = wavelet::wavedec2(x, 2);
  ASSERT_EQ(d.approx.rows(), 7);
  ASSERT_EQ(d.approx.cols(), 10);
  ASSERT_EQ(d.levels[0].hh.rows(), 12);
  ASSERT_EQ(d.levels[0].hh.cols(), 18);
  EXPECT_NEAR(d.approx(1, 2), 2.7504816385830386, 1e-9);
  EXPECT_NEAR(d.approx(4, 9), 0.8997588128569791, 1e-9);
  EXPECT_NEAR(d.levels[0].hh(3, 5), 0.024100265977785286, 1e-9);
  EXPECT_NEAR(d.levels[0].hl(2, 7), 0.045528012203300994, 1e-9);
  EXPECT_NEAR(d.levels[0].lh(6, 1), -0.050408510084953895, 1e-9);
  EXPECT_NEAR(d.levels[1].hh(2, 3), 0.031268992684752285, 1e-9);
  EXPECT_NEAR(d.levels[1].hl(1, 4), 0.02547981755612115, 1e-9);
  EXPECT_NEAR(d.levels[1].lh(5, 8), -0.5425781901517985, 1e-9);

  wavelet::DenoiseInfo info;
  const auto r = wavelet::denoise(x, 2, 1.0, &info);
  EXPECT_NEAR(info.sigma, 0.03568021504625629, 1e-9);
  EXPECT_NEAR(info.threshold, 0.12934639437775808, 1e-9);
  EXPECT_NEAR(r(0, 0), 0.6465934976437565, 1e-9);
  EXPECT_NEAR(r(10, 17), 0.3055643025828916, 1e-9);
  EXPECT_NEAR(r(20, 33), 0.8635300221475508, 1e-9);
  EXPECT_NEAR(r(5, 30), 0.7178904562318964, 1e-9);
}

TEST(Wavelet, PerfectReconstruction) {
  Rng rng(4);
  for (auto [h, w] : {std::pair{256, 768}, std::pair{21, 34}, std::pair{9, 11}}) {
    Grid<double> x(h, w);
    for (auto& v : x.values()) v = rng.uniform();
    const auto y = wavelet::waverec2(wavelet::wavedec2(x, 2));
    ASSERT_TRUE(y.same_shape(x));
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(y.values()[i], x.values()[i], 1e-10);
    const auto z = wavelet::denoise(x, 2, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(z.values()[i], x.values()[i], 1e-10);
  }
}

TEST(Denoise, ConstantImagePassesThrough) {
  BScan b{Grid<float>(256, 768, 0.37f), 3};
  const auto d = denoise(b);
  EXPECT_EQ(d.slice_index, 3);
  for (float v : d.pixels.values()) ASSERT_NEAR(v, 0.37f, 1e-6);
}

TEST(Denoise, RejectsTinyAndNonFinite) {
  EXPECT_THROW(denoise(BScan{Grid<float>(4, 40, 0.5f), 1}), InvalidArgument);
  EXPECT_THROW(denoise(BScan{Grid<float>(40, 6, 0.5f), 1}), InvalidArgument);
  BScan b{Grid<float>(32, 32, 0.5f), 1};
  b.pixels(3, 3) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(denoise(b), InvalidArgument);
}

TEST(Denoise, PhantomSlices) {
  phantom::PhantomConfig c;
  c.seed = 17;
  c.n_bscans = 3;
  c.noise_sigma = 0;
  auto clean_slice = phantom::PhantomGenerator(c).bonafide_slice(1);
  const auto clean = resize_to_network(clean_slice.bscan, std::nullopt).first;
  const auto dc = denoise(clean);
  double mae = 0;
  for (std::size_t i = 0; i < clean.pixels.size(); ++i) mae += std::abs(dc.pixels.values()[i] - clean.pixels.values()[i]);
  EXPECT_LE(mae / clean.pixels.size(), 1e-3);

  c.noise_sigma = 0.25;
  const auto noisy = resize_to_network(phantom::PhantomGenerator(c).bonafide_slice(1).bscan, std::nullopt).first;
  const auto dn = denoise(noisy);
  double before = 0, after = 0;
  for (std::size_t i = 0; i < clean.pixels.size(); ++i) {
    before += std::pow(noisy.pixels.values()[i] - clean.pixels.values()[i], 2);
    after += std::pow(dn.pixels.values()[i] - clean.pixels.values()[i], 2);
  }
  EXPECT_LT(after, before);
  for (float v : dn.pixels.values()) ASSERT_TRUE(v >= 0 && v <= 1);
}

TEST(Straighten, FlatSurfaceAtAnchorIsIdentity) {
  std::vector<int> s(60, 8);
  const auto b = flat_scan(40, 60, s);
  const auto m = banded_mask(40, 60, s);
  const auto r = straighten(b, m);
  EXPECT_EQ(r.pixels, b.pixels);
  EXPECT_EQ(r.mask.labels, m.labels);
  for (int v : r.surface_profile) EXPECT_EQ(v, 8);
  for (int v : r.shifts) EXPECT_EQ(v, 0);
}

TEST(Straighten, RampBecomesFlat) {
  const int cols = 768;
  std::vector<int> s(cols);
  for (int c = 0; c < cols; ++c) s[c] = 8 + c / 100;
  const auto m = banded_mask(256, cols, s);
  const auto r = straighten(flat_scan(256, cols, s), m);
  for (int c = 0; c < cols; ++c) {
    int first = -1;
    for (int y = 0; y < 256; ++y)
      if (r.mask.labels(y, c)) {
        first = y;
        break;
      }
    EXPECT_NEAR(first, 8, 1) << "column " << c;
    EXPECT_EQ(r.surface_profile[c], 8);
  }
}

TEST(Straighten, LabelsClosedAndCountsOnlyLoseDroppedRows) {
  Rng rng(8);
  const int rows = 64, cols = 90;
  std::vector<int> s(cols);
  for (int c = 0; c < cols; ++c) s[c] = 20 + static_cast<int>(10 * std::sin(c / 9.0)) + static_cast<int>(rng.below(3));
  const auto m = banded_mask(rows, cols, s, 8);
  const auto r = straighten(flat_scan(rows, cols, s), m);
  const auto before = m.class_counts(), after = r.mask.class_counts();
  EXPECT_NO_THROW(r.mask.validate());
  // Dropped rows: a positive shift discards the top rows (background here), a negative
  // shift the bottom rows (dermis here).
  std::array<std::uint64_t, 4> dropped{};
  for (int c = 0; c < cols; ++c) {
    const int sh = r.shifts[c];
    if (sh > 0)
      for (int y = 0; y < sh; ++y) ++dropped[m.labels(y, c)];
    else
      for (int y = rows + sh; y < rows; ++y) ++dropped[m.labels(y, c)];
  }
  for (int k = 1; k < 4; ++k) EXPECT_EQ(after[k] + dropped[k], before[k]) << "class " << k;
}

TEST(Straighten, EmptyColumnsAreInterpolated) {
  std::vector<int> s(40, 20);
  auto m = banded_mask(50, 40, s);
  for (int c = 10; c < 15; ++c)
    for (int y = 0; y < 50; ++y) m.labels(y, c) = 0;
  const auto r = straighten(flat_scan(50, 40, s), m);
  for (int c = 0; c < 40; ++c) EXPECT_EQ(r.shifts[c], 12);
  AnnotationMask empty{Grid<std::uint8_t>(50, 40, 0)};
  EXPECT_THROW(straighten(flat_scan(50, 40, s), empty), InvalidArgument);
  EXPECT_THROW(straighten(flat_scan(50, 40, s), AnnotationMask{Grid<std::uint8_t>(50, 41, 1)}), ShapeError);
}

TEST(Straighten, IsIdempotent) {
  const int rows = 80, cols = 120;
  std::vector<int> s(cols);
  for (int c = 0; c < cols; ++c) s[c] = 30 + static_cast<int>(12 * std::sin(c / 15.0));
  const auto once = straighten(flat_scan(rows, cols, s), banded_mask(rows, cols, s));
  const auto twice = straighten(BScan{once.pixels, 1}, once.mask);
  int differing = 0;
  for (int y = 0; y < rows; ++y)
    for (int c = 0; c < cols; ++c) differing += once.mask.labels(y, c) != twice.mask.labels(y, c);
  EXPECT_LE(differing, cols);  // at most a boundary row per column
}

TEST(Straighten, IntensitySurfaceFallback) {
  std::vector<int> s(50);
  for (int c = 0; c < 50; ++c) s[c] = 15 + c / 10;
  const auto b = flat_scan(60, 50, s);
  AnnotationMask unused{Grid<std::uint8_t>(60, 50, 0)};
  StraightenConfig cfg;
  cfg.source = SurfaceSource::intensity;
  const auto r = straighten(b, unused, cfg);
  for (int c = 0; c < 50; ++c) EXPECT_NEAR(r.shifts[c], s[c] - 8, 1);
}

TEST(MaskIndicator, Cases) {
  AnnotationMask ones{Grid<std::uint8_t>(3, 4, 1)};
  const auto all = mask_indicator(ones, Layer::s);
  for (auto v : all.values()) EXPECT_EQ(v, 1);
  AnnotationMask bg{Grid<std::uint8_t>(3, 4, 0)};
  for (Layer h : {Layer::s, Layer::v, Layer::d}) {
    const auto none = mask_indicator(bg, h);
    for (auto v : none.values()) EXPECT_EQ(v, 0);
  }
  Rng rng(3);
  AnnotationMask mixed{Grid<std::uint8_t>(17, 23)};
  for (auto& v : mixed.labels.values()) v = static_cast<std::uint8_t>(rng.below(4));
  const auto counts = mixed.class_counts();
  for (Layer h : {Layer::s, Layer::v, Layer::d}) {
    const auto ind = mask_indicator(mixed, h);
    EXPECT_EQ(std::accumulate(ind.values().begin(), ind.values().end(), 0u), counts[class_of(h)]);
  }
}

TEST(ProjectLayer, HandComputedExample) {
  StraightenedBScan s{Grid<float>(3, 2, std::vector<float>{1, 2, 3, 4, 5, 6}),
                      AnnotationMask{Grid<std::uint8_t>(3, 2, std::vector<std::uint8_t>{1, 0, 1, 1, 0, 0})}, {8, 8}, {0, 0}};
  const auto r = project_layer({s}, Layer::s);
  ASSERT_EQ(r.raw.rows(), 1);
  ASSERT_EQ(r.raw.cols(), 2);
  EXPECT_EQ(r.raw(0, 0), 4.0);
  EXPECT_EQ(r.raw(0, 1), 4.0);
}

TEST(ProjectLayer, ZeroAndFullMasks) {
  Rng rng(6);
  StraightenedBScan s{Grid<float>(5, 7), AnnotationMask{Grid<std::uint8_t>(5, 7, 0)}, {}, {}};
  for (auto& v : s.pixels.values()) v = static_cast<float>(rng.uniform());
  const auto zero = project_layer({s}, Layer::v);
  for (double v : zero.raw.values()) EXPECT_EQ(v, 0.0);
  s.mask.labels = Grid<std::uint8_t>(5, 7, 2);
  const auto r = project_layer({s}, Layer::v);
  for (int c = 0; c < 7; ++c) {
    double col = 0;
    for (int y = 0; y < 5; ++y) col += s.pixels(y, c);
    EXPECT_NEAR(r.raw(0, c), col, 1e-6);
  }
  EXPECT_THROW(project_layer({s, s}, Layer::v, 3), InvalidArgument);
  EXPECT_THROW(project_layer({}, Layer::v), InvalidArgument);
}

TEST(ProjectLayer, PartitionLinearityAndOrder) {
  Rng rng(12);
  std::vector<StraightenedBScan> slices;
  for (int j = 0; j < 6; ++j) {
    StraightenedBScan s{Grid<float>(30, 11), AnnotationMask{Grid<std::uint8_t>(30, 11)}, {}, {}};
    for (auto& v : s.pixels.values()) v = static_cast<float>(rng.uniform());
    for (auto& v : s.mask.labels.values()) v = static_cast<std::uint8_t>(rng.below(4));
    slices.push_back(std::move(s));
  }
  const auto rs = project_layer(slices, Layer::s), rv = project_layer(slices, Layer::v), rd = project_layer(slices, Layer::d);
  const auto fg = project_foreground(slices);
  for (std::size_t i = 0; i < fg.size(); ++i) {
    EXPECT_EQ(rs.raw.values()[i] + rv.raw.values()[i] + rd.raw.values()[i], fg.values()[i]);
    EXPECT_GE(rs.raw.values()[i], 0.0);
  }
  auto scaled = slices;
  for (auto& s : scaled)
    for (auto& v : s.pixels.values()) v *= 0.5f;
  const auto half = project_layer(scaled, Layer::s);
  for (std::size_t i = 0; i < fg.size(); ++i) EXPECT_NEAR(half.raw.values()[i], 0.5 * rs.raw.values()[i], 1e-6);
  auto reversed = slices;
  std::reverse(reversed.begin(), reversed.end());
  const auto rr = project_layer(reversed, Layer::s);
  for (int j = 0; j < 6; ++j)
    for (int c = 0; c < 11; ++c) EXPECT_EQ(rr.raw(j, c), rs.raw(5 - j, c));
}

TEST(ReconstructInstance, PhantomRidgesDuctsAndPartition) {
  phantom::PhantomConfig c;
  c.seed = 33;
  c.n_bscans = 24;
  phantom::PhantomGenerator gen(c);
  std::vector<BScan> slices;
  std::vector<AnnotationMask> masks;
  std::vector<std::vector<int>> ducts;
  for (int j = 0; j < c.n_bscans; ++j) {
    auto s = gen.bonafide_slice(j);
    auto [b, m] = resize_to_network(normalize_bscan(s.bscan), s.mask);
    slices.push_back(std::move(b));
    masks.push_back(std::move(*m));
    ducts.push_back(s.duct_columns);
  }
  const auto r = reconstruct_instance(slices, masks);
  EXPECT_EQ(r[Layer::s].raw.rows(), c.n_bscans);
  EXPECT_EQ(r[Layer::s].raw.cols(), kNetWidth);
  const auto ridge = resize_nearest(gen.ridge_map().ridges, c.n_bscans, kNetWidth);
  EXPECT_GE(pearson(r[Layer::s].raw, ridge), 0.8);
  for (std::size_t i = 0; i < r.foreground.size(); ++i)
    ASSERT_EQ(r.layers[0].raw.values()[i] + r.layers[1].raw.values()[i] + r.layers[2].raw.values()[i], r.foreground.values()[i]);

  // Duct columns are brighter than the ridge columns two A-lines away.
  double duct = 0, beside = 0;
  int n = 0;
  for (int j = 0; j < c.n_bscans; ++j)
    for (int col : ducts[j]) {
      const int x = static_cast<int>(std::floor((col + 0.5) * kNetWidth / kRawWidth));
      if (x < 2 || x + 2 >= kNetWidth) continue;
      duct += r[Layer::s].raw(j, x);
      beside += 0.5 * (r[Layer::s].raw(j, x - 2) + r[Layer::s].raw(j, x + 2));
      ++n;
    }
  ASSERT_GT(n, 0);
  EXPECT_GT(duct / n, beside / n);

  std::vector<BScan> rev_slices(slices.rbegin(), slices.rend());
  std::vector<AnnotationMask> rev_masks(masks.rbegin(), masks.rend());
  const auto rr = reconstruct_instance(rev_slices, rev_masks);
  for (int j = 0; j < c.n_bscans; ++j)
    for (int x = 0; x < kNetWidth; x += 17) EXPECT_EQ(rr[Layer::d].raw(j, x), r[Layer::d].raw(c.n_bscans - 1 - j, x));
  EXPECT_THROW(reconstruct_instance(slices, {}), InvalidArgument);
}

TEST(LayerImage, ExportNormalisation) {
  LayerImage li{Grid<double>(2, 3, std::vector<double>{1, 2, 3, 4, 5, 6}), Layer::s};
  const auto u = li.to_u8();
  EXPECT_EQ(u(0, 0), 0);
  EXPECT_EQ(u(1, 2), 255);
  EXPECT_EQ(u(0, 2), 102);
  LayerImage flat{Grid<double>(2, 2, 7.0), Layer::v};
  const auto fu = flat.to_u8();
  for (auto v : fu.values()) EXPECT_EQ(v, 0);
}
