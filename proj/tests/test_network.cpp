#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "ocfr/nn/network.hpp"
#include "ocfr/train/losses.hpp"
#include "support/gradcheck.hpp"

using namespace ocfr;
using namespace ocfr::nn;

namespace {

template <typename T>
Tensor<T> random_input(Shape4 s, std::uint64_t seed) {
  Tensor<T> x(s);
  Rng rng(seed);
  for (auto& v : x.values()) v = static_cast<T>(rng.uniform());
  return x;
}

}  // namespace

TEST(NetworkConfig, Validation) {
  EXPECT_NO_THROW(NetworkConfig{}.validate());
  EXPECT_THROW((NetworkConfig{250, 768, 1}.validate()), InvalidArgument);
  EXPECT_THROW((NetworkConfig{256, 768, 3}.validate()), InvalidArgument);
  EXPECT_TRUE(NetworkConfig{}.is_full_size());
  EXPECT_FALSE((NetworkConfig{256, 768, 8}.is_full_size()));
}

TEST(SegmentationNet, ShapesAtReducedWidth) {
  NetworkConfig cfg{64, 192, 8};
  SegmentationNet<float> net(cfg, 3);
  auto x = random_input<float>(net.expected_input(2), 1);
  auto out = net.forward(x);
  EXPECT_EQ(out.latent().shape(), (Shape4{2, 64, 2, 6}));
  EXPECT_EQ(out.reconstruction().shape(), x.shape());
  EXPECT_EQ(out.segmentation().shape(), (Shape4{2, 4, 64, 192}));
  EXPECT_EQ(out.recon.f_d1.shape(), (Shape4{2, 64, 4, 12}));
  EXPECT_EQ(out.recon.f_d2.shape(), (Shape4{2, 32, 8, 24}));
  for (float v : out.reconstruction().values()) {
    ASSERT_GT(v, 0.0f);
    ASSERT_LT(v, 1.0f);
  }
  for (int y = 0; y < 64; y += 7)
    for (int xx = 0; xx < 192; xx += 11) {
      double s = 0;
      for (int c = 0; c < 4; ++c) s += out.segmentation().at(1, c, y, xx);
      ASSERT_NEAR(s, 1.0, 1e-5);
    }
}

TEST(SegmentationNet, RejectsWrongInputShape) {
  SegmentationNet<float> net(NetworkConfig{64, 192, 8}, 3);
  Tensor<float> bad(1, 1, 64, 192);
  EXPECT_THROW(net.forward(bad), ShapeError);
  Tensor<float> bad2(1, 3, 64, 160);
  EXPECT_THROW(net.forward(bad2), ShapeError);
}

TEST(SegmentationNet, InferenceIsDeterministicAndPure) {
  SegmentationNet<float> a(NetworkConfig{64, 192, 8}, 11), b(NetworkConfig{64, 192, 8}, 11);
  auto x = random_input<float>(a.expected_input(1), 2);
  auto o1 = a.forward(x), o2 = a.forward(x), o3 = b.forward(x);
  EXPECT_EQ(o1.segmentation(), o2.segmentation());
  EXPECT_EQ(o1.segmentation(), o3.segmentation());
  EXPECT_EQ(o1.reconstruction(), o3.reconstruction());
}

TEST(SegmentationNet, SubNetworksComposeToForward) {
  SegmentationNet<float> net(NetworkConfig{64, 192, 8}, 5);
  auto x = random_input<float>(net.expected_input(1), 9);
  auto full = net.forward(x);
  auto enc = net.encoder_forward(x);
  auto rec = net.reconstruction_decoder_forward(enc.latent);
  auto seg = net.segmentation_decoder_forward(enc.latent, rec.f_d1, rec.f_d2, enc.skips[2]);
  EXPECT_EQ(rec.reconstruction, full.reconstruction());
  EXPECT_EQ(seg.probabilities, full.segmentation());
}

TEST(SegmentationNet, FullWidthParameterCountIsStable) {
  SegmentationNet<float> net(NetworkConfig{}, 0);
  EXPECT_EQ(net.params().trainable_count(), 22294599u);
}

// Analytic vs central-difference gradients of L = L_D + L_S in double precision.
TEST(SegmentationNet, GradientCheck) {
  auto report = check::gradient_check(NetworkConfig{32, 96, 8}, 2, 40, 1e-4, 21);
  ASSERT_GE(report.samples.size(), 20u);
  for (const auto& s : report.samples)
    EXPECT_LE(s.rel_error, 1e-3) << s.param << "[" << s.index << "] analytic " << s.analytic << " numeric " << s.numeric;
  EXPECT_LT(report.kink_skips, 10 * static_cast<int>(report.samples.size()));
}
