#include <gtest/gtest.h>

#include <cmath>

#include "bfel/adversary.h"
#include "bfel/errors.h"
#include "bfel/rng.h"

namespace bfel {
namespace {

GradientVector random_grad(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  GradientVector g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = rng.normal(0.0, 1.0);
  return g;
}

TEST(Poison, SignFlipIsInvolution) {
  const auto g = random_grad(64, 1);
  const auto once = poison_gradient(g, PoisonMode::kSignFlip, 0);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(once[i], -g[i]);
  EXPECT_EQ(poison_gradient(once, PoisonMode::kSignFlip, 0), g);
  const auto boosted = poison_gradient(g, PoisonMode::kSignFlip, 0, 4.0);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(boosted[i], -4.0 * g[i]);
}

TEST(Poison, GaussianNoise) {
  const auto g = random_grad(5000, 2);
  EXPECT_EQ(poison_gradient(g, PoisonMode::kGaussianNoise, 3, 1.0, 0.0), g);
  const auto a = poison_gradient(g, PoisonMode::kGaussianNoise, 3, 1.0, 0.5);
  EXPECT_EQ(a, poison_gradient(g, PoisonMode::kGaussianNoise, 3, 1.0, 0.5));
  EXPECT_NE(a, poison_gradient(g, PoisonMode::kGaussianNoise, 4, 1.0, 0.5));
  double mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < g.dim(); ++i) {
    const double d = a[i] - g[i];
    mean += d;
    sq += d * d;
  }
  mean /= 5000.0;
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_NEAR(std::sqrt(sq / 5000.0 - mean * mean), 0.5, 0.03);
}

TEST(Poison, LabelFlipActsOnData) {
  const auto g = random_grad(10, 5);
  EXPECT_EQ(poison_gradient(g, PoisonMode::kLabelFlip, 1), g);
  const Dataset d(1, 3, {0, 1, 2, 3}, {0, 1, 2, 2});
  const auto f = flip_labels(d);
  EXPECT_EQ(std::vector<std::uint32_t>(f.labels().begin(), f.labels().end()),
            (std::vector<std::uint32_t>{1, 2, 0, 0}));
}

TEST(Poison, UpdateKeepsSparsityPattern) {
  const SparseGradient u(100, 4, {{3, 0.5}, {40, -1.25}, {99, 2.0}});
  const auto p = poison_update(u, PoisonMode::kSignFlip, 0, 4.0);
  ASSERT_EQ(p.size(), u.size());
  EXPECT_EQ(p.round(), 4u);
  EXPECT_EQ(p.encoded_size(), u.encoded_size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    EXPECT_EQ(p.entries()[i].index, u.entries()[i].index);
    EXPECT_EQ(p.entries()[i].value, -4.0 * u.entries()[i].value);
  }
  const SparseGradient empty(100, 0, {});
  EXPECT_EQ(poison_update(empty, PoisonMode::kSignFlip, 0), empty);
}

TEST(Poison, FlippedStepHurtsAccuracy) {
  BlobsSpec bs;
  bs.dim = 10;
  bs.num_classes = 5;
  bs.count = 500;
  const auto data = make_blobs(bs, 8);
  ReferenceModel model({ModelKind::kLogistic, 10, 0, 5});
  ModelParameters p(model.param_count());
  for (int s = 0; s < 20; ++s) p = sgd_step(p, model.gradient(p, data), 0.3);
  const auto g = model.gradient(p, data);
  const double clean = model.accuracy(sgd_step(p, g, 5.0), data);
  const double flipped =
      model.accuracy(sgd_step(p, poison_gradient(g, PoisonMode::kSignFlip, 0), 5.0), data);
  EXPECT_LT(flipped, clean);
}

TEST(Selection, FloorCountsAndDeterminism) {
  EXPECT_EQ(fraction_count(0.3, 10), 3u);
  EXPECT_EQ(fraction_count(0.28, 10), 2u);
  EXPECT_EQ(fraction_count(0.7, 10), 7u);
  EXPECT_EQ(fraction_count(1.0, 10), 10u);
  EXPECT_THROW(fraction_count(1.5, 10), InputError);
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("w" + std::to_string(i));
  const auto a = select_nodes(ids, 0.3, 11);
  EXPECT_EQ(a.size(), 3u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(a, select_nodes(ids, 0.3, 11));
  bool differs = false;
  for (std::uint64_t s = 12; s < 20; ++s) differs |= select_nodes(ids, 0.3, s) != a;
  EXPECT_TRUE(differs);
}

TEST(Exposure, Definitions) {
  std::vector<SparseGradient> dense;
  for (int k = 0; k < 3; ++k) dense.push_back(SparseGradient::from_dense(random_grad(50, k), 0));
  EXPECT_DOUBLE_EQ(exposure_ratio(dense, 50, 3), 1.0);
  EXPECT_DOUBLE_EQ(exposure_ratio(30, 10000, 1), 0.003);
  EXPECT_THROW(exposure_ratio(std::span<const SparseGradient>{}, 50, 1), InputError);
  EXPECT_THROW(exposure_ratio(3, 50, 0), InputError);
}

TEST(Exposure, ReciprocalOfRatioAndMonotoneInRho) {
  double last = 2.0;
  for (double rho : {100.0, 50.0, 10.0, 1.0, 0.3}) {
    CompressionConfig c{rho, 0.9, 1.0};
    GradientCompressor comp(2000, c);
    std::vector<SparseGradient> ups;
    for (std::uint64_t r = 0; r < 20; ++r) ups.push_back(comp.compress(random_grad(2000, r)));
    const double e = exposure_ratio(ups, 2000, 20);
    EXPECT_NEAR(e, 1.0 / compression_ratio(ups, 2000, 20), 1e-12);
    EXPECT_LT(e, last) << rho;
    last = e;
  }
}

TEST(AttackConfig, Validation) {
  AttackConfig a;
  a.poison_fraction = -0.1;
  EXPECT_THROW(a.validate(), ConfigError);
  a = {};
  a.poison_scale = 0.0;
  EXPECT_THROW(a.validate(), ConfigError);
  a = {};
  a.noise_sigma = -1.0;
  EXPECT_THROW(a.validate(), ConfigError);
  EXPECT_EQ(poison_mode_from_string(to_string(PoisonMode::kGaussianNoise)), PoisonMode::kGaussianNoise);
  EXPECT_THROW(poison_mode_from_string("backdoor"), ConfigError);
}

}  // namespace
}  // namespace bfel
