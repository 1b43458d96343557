#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hdrsr/image.hpp"
#include "test_util.hpp"

using namespace hdrsr;

namespace {

// Independent bicubic: Keys weights evaluated per tap, clamped source index.
double brute_bicubic_sample(const Plane& p, double sy, double sx) {
  auto k = [](double t) {
    t = std::abs(t);
    const double a = -0.5;
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
  };
  const long y0 = static_cast<long>(std::floor(sy)), x0 = static_cast<long>(std::floor(sx));
  double acc = 0.0;
  for (long j = y0 - 1; j <= y0 + 2; ++j) {
    for (long i = x0 - 1; i <= x0 + 2; ++i) {
      const long cy = std::clamp(j, 0L, static_cast<long>(p.height()) - 1);
      const long cx = std::clamp(i, 0L, static_cast<long>(p.width()) - 1);
      acc += k(sy - double(j)) * k(sx - double(i)) * p.at(static_cast<std::size_t>(cy), static_cast<std::size_t>(cx));
    }
  }
  return acc;
}

Plane brute_bicubic(const Plane& p, std::size_t oh, std::size_t ow) {
  Plane out(oh, ow);
  const double ry = double(p.height()) / double(oh), rx = double(p.width()) / double(ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      out.at(y, x) = brute_bicubic_sample(p, (double(y) + 0.5) * ry - 0.5, (double(x) + 0.5) * rx - 0.5);
  return out;
}

}  // namespace

TEST(ColorConversion, PrimariesMapToKnownYCbCr) {
  RasterImage img(1, 3, 3);
  const double px[3][3] = {{1, 1, 1}, {1, 0, 0}, {0, 0, 1}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.at(0, i, c) = px[i][c];
  const auto ycc = rgb_to_ycbcr(img);
  EXPECT_DOUBLE_EQ(ycc.y[0], 1.0);
  EXPECT_NEAR(ycc.cb[0], 0.5, 1e-15);
  EXPECT_NEAR(ycc.cr[0], 0.5, 1e-15);
  EXPECT_NEAR(ycc.y[1], 0.299, 1e-15);
  EXPECT_NEAR(ycc.cb[1], 0.5 - 0.299 * 0.564, 1e-15);
  EXPECT_NEAR(ycc.cr[1], 0.5 + 0.701 * 0.713, 1e-15);
  EXPECT_NEAR(ycc.y[2], 0.114, 1e-15);
  EXPECT_NEAR(ycc.cb[2], 0.5 + 0.886 * 0.564, 1e-15);
}

TEST(ColorConversion, RoundTripIsIdentity) {
  std::mt19937_64 rng(1);
  const auto img = test::random_image(17, 13, 3, rng);
  const auto ycc = rgb_to_ycbcr(img);
  const auto back = ycbcr_to_rgb(ycc.y, ycc.cb, ycc.cr);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back.data()[i], img.data()[i], 1e-12);
}

TEST(ColorConversion, GrayHasNeutralChroma) {
  std::mt19937_64 rng(2);
  const RasterImage rgb = to_rgb(test::random_image(5, 7, 1, rng));
  const auto ycc = rgb_to_ycbcr(rgb);
  for (std::size_t i = 0; i < ycc.y.size(); ++i) {
    EXPECT_NEAR(ycc.cb[i], 0.5, 1e-15);
    EXPECT_NEAR(ycc.cr[i], 0.5, 1e-15);
  }
}

TEST(ColorConversion, RejectsGrayInput) {
  EXPECT_THROW(rgb_to_ycbcr(RasterImage(2, 2, 1)), ShapeError);
  EXPECT_THROW(RasterImage(2, 2, 2), ShapeError);
}

TEST(GammaMap, MatchesHighPrecisionValues) {
  // reference values from 30-digit arithmetic
  Plane p(1, 3);
  p[0] = 0.5;
  p[1] = 0.8;
  p[2] = 0.0;
  const Plane g = gamma_map(p, 2.2);
  EXPECT_NEAR(g[0], 0.21763764082403103478, 1e-15);
  EXPECT_NEAR(g[1], 0.61206559986562367086, 1e-15);
  EXPECT_EQ(g[2], 0.0);
  Plane q(1, 1, 0.25);
  EXPECT_NEAR(gamma_map(q, 1.0 / 2.2)[0], 0.53252054471998133910, 1e-15);
}

TEST(GammaMap, InverseExponentsRoundTrip) {
  std::mt19937_64 rng(3);
  const Plane p = test::random_plane(9, 9, rng);
  const Plane back = gamma_map(gamma_map(p, 2.2), 1.0 / 2.2);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(back[i], p[i], 1e-12);
}

TEST(GammaMap, RejectsNegativeSamples) {
  Plane p(1, 2, 0.5);
  p[1] = -1e-9;
  EXPECT_THROW(gamma_map(p, 2.2), RangeError);
  EXPECT_THROW(gamma_map(Plane(1, 1, 0.5), 0.0), ParameterError);
}

TEST(KeysKernel, InterpolatesAndPartitionsUnity) {
  EXPECT_DOUBLE_EQ(keys_kernel(0.0), 1.0);
  EXPECT_DOUBLE_EQ(keys_kernel(1.0), 0.0);
  EXPECT_DOUBLE_EQ(keys_kernel(2.0), 0.0);
  EXPECT_DOUBLE_EQ(keys_kernel(2.5), 0.0);
  EXPECT_DOUBLE_EQ(keys_kernel(-0.5), keys_kernel(0.5));
  for (double t = 0.0; t < 1.0; t += 0.0625) {
    const double s = keys_kernel(t + 1) + keys_kernel(t) + keys_kernel(1 - t) + keys_kernel(2 - t);
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
}

TEST(Bicubic, MatchesBruteForceOracle) {
  std::mt19937_64 rng(4);
  for (auto [h, w, scale] : {std::tuple{8, 8, 2.0}, std::tuple{7, 5, 2.0}, std::tuple{16, 12, 0.5},
                             std::tuple{9, 11, 0.5}, std::tuple{1, 6, 2.0}}) {
    const Plane p = test::random_plane(std::size_t(h), std::size_t(w), rng);
    const Plane got = bicubic_resize(p, scale);
    const auto oh = static_cast<std::size_t>(std::lround(scale * h));
    const auto ow = static_cast<std::size_t>(std::lround(scale * w));
    ASSERT_EQ(got.height(), oh);
    ASSERT_EQ(got.width(), ow);
    const Plane want = brute_bicubic(p, oh, ow);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << h << "x" << w << " @" << i;
  }
}

TEST(Bicubic, ReproducesConstantsExactly) {
  for (double c : {0.0, 0.5, 0.1, 1.0 / 3.0, 0.7}) {
    const Plane p(10, 6, c);
    for (double s : {2.0, 0.5}) {
      for (double v : test::values(bicubic_resize(p, s))) EXPECT_EQ(v, c);
    }
  }
}

TEST(Bicubic, ReproducesLinearRampsInTheInterior) {
  Plane p(12, 12);
  for (std::size_t y = 0; y < 12; ++y)
    for (std::size_t x = 0; x < 12; ++x) p.at(y, x) = 0.1 * double(x) + 0.03 * double(y);
  const Plane up = bicubic_resize(p, 2.0);
  // away from the clamped border the Keys kernel is exact on linear data
  for (std::size_t y = 4; y < 20; ++y)
    for (std::size_t x = 4; x < 20; ++x) {
      const double sy = (double(y) + 0.5) / 2.0 - 0.5, sx = (double(x) + 0.5) / 2.0 - 0.5;
      EXPECT_NEAR(up.at(y, x), 0.1 * sx + 0.03 * sy, 1e-12);
    }
}

TEST(Bicubic, ImageResizeWorksPerChannel) {
  std::mt19937_64 rng(5);
  const auto img = test::random_image(6, 4, 3, rng);
  const auto up = bicubic_resize(img, 2.0);
  ASSERT_EQ(up.height(), 12u);
  ASSERT_EQ(up.width(), 8u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(up.channel(c), bicubic_resize(img.channel(c), 2.0));
  }
}

TEST(Planes, ClampAndReplicate) {
  Plane p(1, 3);
  p[0] = -1;
  p[1] = 0.5;
  p[2] = 3;
  const Plane c = clamp_plane(p, 0.0, 1.0);
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 0.5);
  EXPECT_EQ(c[2], 1.0);
  RasterImage g(1, 1, 1, 0.25);
  const auto rgb = to_rgb(g);
  ASSERT_EQ(rgb.channels(), 3u);
  for (double v : rgb.data()) EXPECT_EQ(v, 0.25);
  EXPECT_THROW(Plane(2, 2, std::vector<double>(3)), ShapeError);
}
