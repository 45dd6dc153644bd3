#include <cmath>

#include "nptraj/gaussian.hpp"
#include "nptraj/ops.hpp"
#include "test_util.hpp"

using namespace nptraj;

namespace {

DiagonalGaussian g1(double mean, double std) { return {Tensor::vector({mean}), Tensor::vector({std})}; }

}  // namespace

TEST(Gaussian, StandardNormalDensityAtZero) {
  EXPECT_NEAR(log_prob(g1(0, 1), Tensor::vector({0})).item(), -0.918938533204673, 1e-12);
  EXPECT_NEAR(log_prob(standard_normal({3}), Tensor::vector({0, 0, 0})).item(), -3 * 0.918938533204673, 1e-12);
}

TEST(Gaussian, KlClosedForms) {
  EXPECT_EQ(kl_divergence(g1(0, 1), g1(0, 1)).item(), 0.0);
  EXPECT_NEAR(kl_divergence(g1(1, 1), g1(0, 1)).item(), 0.5, 1e-12);
  // log(1/2) + 4/2 - 1/2
  EXPECT_NEAR(kl_divergence(g1(0, 2), g1(0, 1)).item(), 0.8068528194400547, 1e-12);
}

TEST(Gaussian, StdFloorFromRaw) {
  const DiagonalGaussian g = gaussian_from_raw(Tensor::vector({0, 0}), Tensor::vector({0, -50}));
  EXPECT_NEAR(g.std[0], 0.7031471805599453, 1e-4);
  EXPECT_GE(g.std[1], kMinStd);
  EXPECT_NEAR(g.std[1], kMinStd, 1e-12);
}

TEST(Gaussian, KlNonNegativeOnRandomPairs) {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto draw = [&] {
      return gaussian_from_raw(test::randn(rng, {4}, 3.0), test::randn(rng, {4}, 3.0));
    };
    const DiagonalGaussian p = draw(), q = draw();
    EXPECT_GE(kl_divergence(p, q).item(), 0.0);
  }
}

TEST(Gaussian, DensityIntegratesToOne) {
  const DiagonalGaussian g = g1(0.3, 0.7);
  const double lo = 0.3 - 12 * 0.7, hi = 0.3 + 12 * 0.7;
  const int n = 20000;
  const double h = (hi - lo) / n;
  double total = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    total += w * std::exp(log_prob(g, Tensor::vector({lo + i * h})).item());
  }
  EXPECT_NEAR(total * h, 1.0, 1e-6);
}

TEST(Gaussian, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(log_prob(standard_normal({2}), Tensor::vector({1, 2, 3})), DimensionError);
  EXPECT_THROW(kl_divergence(standard_normal({2}), standard_normal({3})), DimensionError);
}

TEST(Gaussian, SampleIsAffineInEps) {
  const DiagonalGaussian g = {Tensor::vector({1, -2}), Tensor::vector({0.5, 3})};
  test::expect_all_near(sample(g, Tensor::vector({0, 0})), {1, -2}, 0.0);
  test::expect_all_near(sample(g, Tensor::vector({2, -1})), {2, -5}, 1e-15);
}

TEST(Gaussian, MonteCarloMoments) {
  Rng rng(8);
  const DiagonalGaussian g = g1(3, 0.5);
  const int n = 100000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample(g, Tensor::vector({rng.normal()})).item();
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 3.0, 4 * 0.5 / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(s2 / n - mean * mean), 0.5, 0.01);
}

TEST(Gaussian, LogProbGradientMatchesAnalytic) {
  Tape tape;
  const Tensor mean = tape.watch(Tensor::vector({0.4}));
  const Tensor std = tape.watch(Tensor::vector({1.5}));
  const Gradients g = tape.backward(log_prob({mean, std}, Tensor::vector({1.0})));
  const double z = (1.0 - 0.4) / 1.5;
  EXPECT_NEAR(g.of(mean)[0], z / 1.5, 1e-14);
  EXPECT_NEAR(g.of(std)[0], (z * z - 1.0) / 1.5, 1e-14);
}
