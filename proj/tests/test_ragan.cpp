#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "hdrsr/ragan.hpp"

using namespace hdrsr;

namespace {

// Straight evaluation with explicit sigmoids and logs; only valid away from saturation.
double direct_loss(const std::vector<double>& pos, const std::vector<double>& neg) {
  const double mp = std::accumulate(pos.begin(), pos.end(), 0.0) / double(pos.size());
  const double mn = std::accumulate(neg.begin(), neg.end(), 0.0) / double(neg.size());
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  double a = 0.0, b = 0.0;
  for (double p : pos) a += std::log(sig(p - mn));
  for (double q : neg) b += std::log(1.0 - sig(q - mp));
  return -a / double(pos.size()) - b / double(neg.size());
}

std::vector<double> random_logits(std::size_t n, std::mt19937_64& rng, double spread = 3.0) {
  std::uniform_real_distribution<double> d(-spread, spread);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(Ragan, EqualLogitsGiveTwoLogTwo) {
  for (double c : {0.0, -4.0, 17.5}) {
    const std::vector<double> l(8, c);
    EXPECT_NEAR(ragan_generator_loss<double>(l, l).loss, 1.38629436111989061883, 1e-6);
    EXPECT_NEAR(ragan_discriminator_loss<double>(l, l).loss, 1.38629436111989061883, 1e-6);
  }
  const std::vector<float> f(5, 0.25f);
  EXPECT_NEAR(ragan_generator_loss<float>(f, f).loss, 1.38629436111989061883, 1e-6);
}

TEST(Ragan, InvariantToACommonShift) {
  std::mt19937_64 rng(60);
  for (int t = 0; t < 100; ++t) {
    auto r = random_logits(16, rng), f = random_logits(16, rng);
    const double g0 = ragan_generator_loss<double>(r, f).loss, d0 = ragan_discriminator_loss<double>(r, f).loss;
    const double shift = std::uniform_real_distribution<double>(-50, 50)(rng);
    for (auto& v : r) v += shift;
    for (auto& v : f) v += shift;
    EXPECT_NEAR(ragan_generator_loss<double>(r, f).loss, g0, 1e-6);
    EXPECT_NEAR(ragan_discriminator_loss<double>(r, f).loss, d0, 1e-6);
  }
}

TEST(Ragan, DiscriminatorIsTheRoleSwap) {
  std::mt19937_64 rng(61);
  const auto r = random_logits(9, rng), f = random_logits(9, rng);
  const auto g = ragan_generator_loss<double>(r, f);
  const auto d = ragan_discriminator_loss<double>(f, r);
  EXPECT_DOUBLE_EQ(g.loss, d.loss);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_DOUBLE_EQ(g.grad_real[i], d.grad_fake[i]);
    EXPECT_DOUBLE_EQ(g.grad_fake[i], d.grad_real[i]);
  }
}

TEST(Ragan, MatchesDirectFormula) {
  std::mt19937_64 rng(62);
  for (int t = 0; t < 200; ++t) {
    const auto r = random_logits(1 + t % 12, rng), f = random_logits(1 + t % 12, rng);
    EXPECT_NEAR(ragan_generator_loss<double>(r, f).loss, direct_loss(r, f), 1e-6);
    EXPECT_NEAR(ragan_discriminator_loss<double>(r, f).loss, direct_loss(f, r), 1e-6);
  }
}

TEST(Ragan, SaturatesToZeroAndStaysFinite) {
  const std::vector<double> r(4, 400.0), f(4, -400.0);
  const auto g = ragan_generator_loss<double>(r, f);
  EXPECT_LT(g.loss, 1e-12);
  const auto d = ragan_discriminator_loss<double>(r, f);
  EXPECT_NEAR(d.loss, 1600.0, 1e-9);
  for (double v : d.grad_real) EXPECT_TRUE(std::isfinite(v));
  for (double v : d.grad_fake) EXPECT_TRUE(std::isfinite(v));
}

TEST(Ragan, GradientsMatchCentralDifferencesInDouble) {
  std::mt19937_64 rng(63);
  const auto r0 = random_logits(6, rng), f0 = random_logits(6, rng);
  const auto g = ragan_generator_loss<double>(r0, f0);
  const double h = 1e-6;
  for (std::size_t i = 0; i < r0.size(); ++i) {
    auto rp = r0, rm = r0;
    rp[i] += h;
    rm[i] -= h;
    const double num = (ragan_generator_loss<double>(rp, f0).loss - ragan_generator_loss<double>(rm, f0).loss) / (2 * h);
    EXPECT_NEAR(g.grad_real[i], num, 1e-8);
    auto fp = f0, fm = f0;
    fp[i] += h;
    fm[i] -= h;
    const double numf = (ragan_generator_loss<double>(r0, fp).loss - ragan_generator_loss<double>(r0, fm).loss) / (2 * h);
    EXPECT_NEAR(g.grad_fake[i], numf, 1e-8);
  }
}

TEST(Ragan, RejectsEmptyOrUnequalBatches) {
  const std::vector<double> a(3, 0.0), b(2, 0.0), e;
  EXPECT_THROW(ragan_generator_loss<double>(e, e), ParameterError);
  EXPECT_THROW(ragan_generator_loss<double>(a, b), ParameterError);
  EXPECT_THROW(ragan_discriminator_loss<double>(a, e), ParameterError);
}
