#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bfel/errors.h"
#include "bfel/model.h"
#include "bfel/rng.h"

namespace bfel {
namespace {

Dataset random_batch(std::size_t n, std::size_t dim, std::uint32_t k, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n * dim);
  std::vector<std::uint32_t> y(n);
  for (auto& v : x) v = rng.normal(0.0, 1.0);
  for (auto& l : y) l = static_cast<std::uint32_t>(rng.below(k));
  return Dataset(dim, k, std::move(x), std::move(y));
}

ModelParameters random_params(std::size_t n, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  std::vector<double> p(n);
  for (auto& v : p) v = rng.normal(0.0, scale);
  return ModelParameters(std::move(p));
}

// Direct transcription of the forward pass, one scalar at a time.
double naive_loss(const ModelSpec& s, const ModelParameters& p, const Dataset& d) {
  const std::size_t in = s.input_dim, h = s.hidden, k = s.num_classes;
  double total = 0.0;
  for (std::size_t n = 0; n < d.size(); ++n) {
    const auto x = d.features(n);
    std::vector<double> act;
    std::size_t off = 0;
    if (s.kind == ModelKind::kMlp) {
      for (std::size_t j = 0; j < h; ++j) {
        double z = p[h * in + j];
        for (std::size_t i = 0; i < in; ++i) z += p[j * in + i] * x[i];
        act.push_back(std::tanh(z));
      }
      off = h * in + h;
    } else {
      act.assign(x.begin(), x.end());
    }
    const std::size_t width = act.size();
    std::vector<double> logit(k);
    for (std::size_t c = 0; c < k; ++c) {
      double z = p[off + k * width + c];
      for (std::size_t j = 0; j < width; ++j) z += p[off + c * width + j] * act[j];
      logit[c] = z;
    }
    double denom = 0.0;
    for (double z : logit) denom += std::exp(z);
    total += -std::log(std::exp(logit[d.label(n)]) / denom);
  }
  return total / static_cast<double>(d.size());
}

TEST(ModelLoss, UniformPredictionGivesLogK) {
  for (std::uint32_t k : {2u, 5u, 10u}) {
    ModelSpec spec{ModelKind::kMlp, 6, 8, k};
    ReferenceModel m(spec);
    ModelParameters p = random_params(spec.param_count(), 3);
    // Zero output layer: every class gets logit 0.
    auto v = p.mutable_values();
    std::fill(v.begin() + 6 * 8 + 8, v.end(), 0.0);
    EXPECT_NEAR(m.loss(p, random_batch(17, 6, k, k)), std::log(double(k)), 1e-12);
  }
}

TEST(ModelLoss, CertainPredictionGivesZero) {
  ModelSpec spec{ModelKind::kLogistic, 1, 0, 2};
  ReferenceModel m(spec);
  // W = [0, 0], b = [0, 1e4]: class 1 has probability 1 in double precision.
  ModelParameters p(std::vector<double>{0.0, 0.0, 0.0, 1e4});
  Dataset one(1, 2, {0.3}, {1});
  EXPECT_EQ(m.loss(p, one), 0.0);
}

TEST(ModelLoss, MatchesScalarOracleSeed7) {
  const auto batch = random_batch(4, 5, 3, 7);
  for (auto kind : {ModelKind::kMlp, ModelKind::kLogistic}) {
    ModelSpec spec{kind, 5, 4, 3};
    ReferenceModel m(spec);
    const auto p = random_params(spec.param_count(), 7);
    EXPECT_NEAR(m.loss(p, batch), naive_loss(spec, p, batch), 1e-9);
  }
}

TEST(ModelLoss, NonNegativeAndFinite) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ModelSpec spec{ModelKind::kMlp, 4, 5, 4};
    ReferenceModel m(spec);
    const double l = m.loss(random_params(spec.param_count(), seed, 3.0), random_batch(9, 4, 4, seed));
    EXPECT_TRUE(std::isfinite(l));
    EXPECT_GE(l, 0.0);
  }
}

TEST(ModelLoss, DimensionMismatchThrows) {
  ReferenceModel m({ModelKind::kMlp, 4, 5, 3});
  EXPECT_THROW(m.loss(ModelParameters(7), random_batch(2, 4, 3, 1)), ConfigError);
  EXPECT_THROW(m.loss(ModelParameters(m.param_count()), random_batch(2, 5, 3, 1)), ConfigError);
}

TEST(ModelGradient, ZeroFeaturesLeaveWeightBlockZero) {
  ModelSpec spec{ModelKind::kLogistic, 3, 0, 4};
  ReferenceModel m(spec);
  Dataset zeros(3, 4, std::vector<double>(15, 0.0), {0, 1, 1, 3, 2});
  const auto g = m.gradient(random_params(spec.param_count(), 11), zeros);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(g[i], 0.0);
  double bias = 0.0;
  for (std::size_t i = 12; i < 16; ++i) bias += std::abs(g[i]);
  EXPECT_GT(bias, 0.0);
}

TEST(ModelGradient, DuplicatedBatchSameGradient) {
  ModelSpec spec{ModelKind::kMlp, 4, 6, 3};
  ReferenceModel m(spec);
  const auto p = random_params(spec.param_count(), 5);
  const auto d = random_batch(8, 4, 3, 5);
  std::vector<std::size_t> once(8), twice(16);
  std::iota(once.begin(), once.end(), 0);
  for (std::size_t i = 0; i < 16; ++i) twice[i] = i % 8;
  const auto a = m.gradient(p, d, once);
  const auto b = m.gradient(p, d, twice);
  for (std::size_t i = 0; i < a.dim(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(ModelInit, DeterministicAndShaped) {
  ModelSpec spec{ModelKind::kMlp, 10, 7, 4, 0.05};
  ReferenceModel m(spec);
  EXPECT_EQ(m.init(9), m.init(9));
  EXPECT_NE(m.init(9), m.init(10));
  const auto p = m.init(9);
  EXPECT_EQ(p.dim(), 10u * 7 + 7 + 7 * 4 + 4);
  for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(p[70 + j], 0.0);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(p[p.dim() - 1 - c], 0.0);
}

TEST(SgdStep, Examples) {
  const ModelParameters w(std::vector<double>{1.0, 1.0});
  EXPECT_EQ(sgd_step(w, GradientVector(std::vector<double>{2.0, -4.0}), 0.5),
            ModelParameters(std::vector<double>{0.0, 3.0}));
  EXPECT_EQ(sgd_step(w, GradientVector(2), 0.7), w);
  EXPECT_THROW(sgd_step(w, GradientVector(3), 0.1), ConfigError);
}

TEST(SgdStep, TwoStepsEqualSummedStep) {
  const auto w = random_params(50, 1);
  const auto g1 = random_params(50, 2), g2 = random_params(50, 3);
  GradientVector a(50), b(50), sum(50);
  for (std::size_t i = 0; i < 50; ++i) {
    a[i] = g1[i];
    b[i] = g2[i];
    sum[i] = g1[i] + g2[i];
  }
  const auto two = sgd_step(sgd_step(w, a, 0.1), b, 0.1);
  const auto one = sgd_step(w, sum, 0.1);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(two[i], one[i], 1e-14);
}

TEST(Accuracy, PerfectModelScoresOne) {
  // Logistic with W = 10*I on one-hot inputs.
  ModelSpec spec{ModelKind::kLogistic, 3, 0, 3};
  ReferenceModel m(spec);
  ModelParameters p(12);
  for (std::size_t c = 0; c < 3; ++c) p[c * 3 + c] = 10.0;
  Dataset d(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0}, {0, 1, 2, 1});
  EXPECT_EQ(m.accuracy(p, d), 1.0);
}

TEST(Accuracy, UniformModelScoresClassZeroFrequency) {
  ModelSpec spec{ModelKind::kLogistic, 2, 0, 4};
  ReferenceModel m(spec);
  const auto d = random_batch(40, 2, 4, 13);
  const auto zeros = std::count(d.labels().begin(), d.labels().end(), 0u);
  EXPECT_DOUBLE_EQ(m.accuracy(ModelParameters(spec.param_count()), d), zeros / 40.0);
}

TEST(Accuracy, TwentySampleHandScored) {
  // Scores are the raw inputs (W = I, b = 0); ties go to the lower class.
  ModelSpec spec{ModelKind::kLogistic, 3, 0, 3};
  ReferenceModel m(spec);
  ModelParameters p(12);
  for (std::size_t c = 0; c < 3; ++c) p[c * 3 + c] = 1.0;
  const std::vector<double> x = {
      1, 0, 0,  0, 2, 1,  0, 0, 3,  1, 1, 0,  2, 2, 2,  0, 1, 1,  5, 4, 4,
      3, 4, 5,  1, 0, 1,  0, 0, 0,  2, 1, 3,  4, 1, 0,  1, 3, 2,  0, 3, 3,
      6, 1, 2,  2, 5, 1,  1, 1, 2,  3, 0, 3,  0, 2, 0,  9, 8, 7};
  // Argmax by hand: 0 1 2 0 0 1 0 2 0 0 2 0 1 1 0 1 2 0 1 0
  const std::vector<std::uint32_t> labels = {0, 1, 2, 1, 0, 2, 0, 2, 2, 0,
                                             2, 1, 1, 1, 2, 1, 2, 0, 1, 1};
  // Matches on samples 0,1,2,4,6,7,9,10,12,13,15,16,17,18 -> 14 of 20.
  Dataset d(3, 3, x, labels);
  EXPECT_DOUBLE_EQ(m.accuracy(p, d), 14.0 / 20.0);
}

TEST(Accuracy, PermutationInvariant) {
  ModelSpec spec{ModelKind::kMlp, 5, 6, 4};
  ReferenceModel m(spec);
  const auto p = random_params(spec.param_count(), 21, 1.0);
  const auto d = random_batch(60, 5, 4, 21);
  std::vector<std::size_t> perm(60);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::rotate(perm.begin(), perm.begin() + 17, perm.end());
  EXPECT_EQ(m.accuracy(p, d), m.accuracy(p, d.subset(perm)));
}

TEST(Accuracy, PredictBreaksTiesLow) {
  ModelSpec spec{ModelKind::kLogistic, 1, 0, 3};
  ReferenceModel m(spec);
  ModelParameters p(std::vector<double>{0, 0, 0, 0.0, 2.0, 2.0});
  const double x[] = {1.0};
  EXPECT_EQ(m.predict(p, x), 1u);
}

TEST(FlatVector, RejectsNonFinite) {
  EXPECT_THROW(ModelParameters(std::vector<double>{1.0, NAN}), InputError);
  EXPECT_THROW(GradientVector(std::vector<double>{INFINITY}), InputError);
}

TEST(ModelDigest, ChangesWithAnyCoordinate) {
  auto p = random_params(20, 4);
  const auto d = model_digest(p);
  p[13] = std::nextafter(p[13], 10.0);
  EXPECT_NE(d, model_digest(p));
}

}  // namespace
}  // namespace bfel
