#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "grad_check.hpp"
#include "prp/errors.hpp"
#include "prp/losses.hpp"

using namespace prp::losses;
using prp::Tensor;
using prp::test::random_tensor;

TEST(Discriminative, UniformLogits) {
  const std::vector<int> labels{2, 0};
  EXPECT_NEAR(discriminative_loss(Tensor({2, 4}, 0.3), labels).value, 1.3862943611198906, 1e-12);
}

TEST(Discriminative, ConfidentLogits) {
  const std::vector<int> labels{0};
  // -ln(e^10 / (e^10 + 3))
  EXPECT_NEAR(discriminative_loss(Tensor({1, 4}, {10, 0, 0, 0}), labels).value, 0.00013619051493829723, 1e-15);
}

TEST(Discriminative, SoftmaxRowsSumToOne) {
  const Tensor logits = random_tensor({16, 7}, 1, 5.0);
  const Tensor p = softmax(logits);
  for (int64_t r = 0; r < 16; ++r) {
    double s = 0;
    for (int64_t c = 0; c < 7; ++c) s += p[r * 7 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  // huge logits stay finite
  const Tensor big = softmax(Tensor({1, 3}, {1000, 999, -1000}));
  EXPECT_TRUE(big.all_finite());
}

TEST(Discriminative, NonNegativeAndLabelErrors) {
  const Tensor logits = random_tensor({8, 3}, 2, 3.0);
  const std::vector<int> labels{0, 1, 2, 0, 1, 2, 0, 1};
  EXPECT_GE(discriminative_loss(logits, labels).value, 0.0);
  const std::vector<int> bad{0, 3};
  EXPECT_THROW(discriminative_loss(Tensor({2, 3}), bad), prp::InputError);
  const std::vector<int> neg{-1};
  EXPECT_THROW(discriminative_loss(Tensor({1, 3}), neg), prp::InputError);
}

TEST(Discriminative, GradientMatchesFiniteDifferences) {
  Tensor logits = random_tensor({4, 5}, 3);
  const std::vector<int> labels{4, 0, 2, 2};
  const auto analytic = discriminative_loss(logits, labels).grad;
  std::mt19937_64 rng(4);
  prp::test::GradCheck r;
  prp::test::compare_entries(r, logits.values(), analytic.values(),
                             [&] { return discriminative_loss(logits, labels).value; }, 20, rng);
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(Accuracy, ArgmaxHits) {
  const Tensor logits({3, 2}, {1, 0, 0, 1, 2, 3});
  const std::vector<int> labels{0, 0, 1};
  EXPECT_NEAR(accuracy(logits, labels), 2.0 / 3.0, 1e-12);
}

TEST(Generative, HandExample) {
  const Tensor y({1, 1, 1, 2, 2}, {1, -1, 2, 0});
  const Tensor g({1, 1, 1, 2, 2}, 0.0);
  const Tensor m({1, 1, 1, 2, 2}, {0.8, 2.0, 1.0, 1.0});
  EXPECT_NEAR(generative_loss(y, g, m).value, 1.7, 1e-12);
}

TEST(Generative, NeutralWeightsGiveMse) {
  const Tensor y = random_tensor({2, 3, 4, 3, 3}, 5), g = random_tensor({2, 3, 4, 3, 3}, 6);
  double mse = 0;
  for (int64_t i = 0; i < y.numel(); ++i) mse += (y[i] - g[i]) * (y[i] - g[i]);
  mse /= static_cast<double>(y.numel());
  EXPECT_NEAR(generative_loss(y, g, Tensor({2, 1, 4, 3, 3}, 1.0)).value, mse, 1e-12);
  EXPECT_NEAR(generative_loss(y, g, Tensor({2, 4, 3, 3}, 1.0)).value, mse, 1e-12);
  EXPECT_EQ(generative_loss(y, y, Tensor({2, 1, 4, 3, 3}, 1.7)).value, 0.0);
}

TEST(Generative, PermutationInvariant) {
  Tensor y = random_tensor({1, 1, 2, 3, 3}, 7), g = random_tensor({1, 1, 2, 3, 3}, 8), m = random_tensor({1, 1, 2, 3, 3}, 9);
  for (auto& v : m.values()) v = std::abs(v) + 0.8;
  const double base = generative_loss(y, g, m).value;
  std::vector<size_t> perm(18);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(10);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor yp(y.shape()), gp(g.shape()), mp(m.shape());
  for (size_t i = 0; i < 18; ++i) {
    yp[static_cast<int64_t>(i)] = y[static_cast<int64_t>(perm[i])];
    gp[static_cast<int64_t>(i)] = g[static_cast<int64_t>(perm[i])];
    mp[static_cast<int64_t>(i)] = m[static_cast<int64_t>(perm[i])];
  }
  EXPECT_NEAR(generative_loss(yp, gp, mp).value, base, 1e-12);
}

TEST(Generative, GradientIsTwoMTimesResidualOverN) {
  Tensor y = random_tensor({1, 1, 3, 4, 4}, 11);
  const Tensor g = random_tensor({1, 1, 3, 4, 4}, 12);
  Tensor m = random_tensor({1, 1, 3, 4, 4}, 13);
  for (auto& v : m.values()) v = 0.8 + std::abs(v);
  const auto out = generative_loss(y, g, m);
  const double n = static_cast<double>(y.numel());
  for (int64_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(out.grad[i], 2 * m[i] * (y[i] - g[i]) / n, 1e-15);
  std::mt19937_64 rng(14);
  prp::test::GradCheck r;
  prp::test::compare_entries(r, y.values(), out.grad.values(), [&] { return generative_loss(y, g, m).value; }, 48,
                             rng);
  EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(Generative, ShapeErrors) {
  EXPECT_THROW(generative_loss(Tensor({1, 1, 2, 2, 2}), Tensor({1, 1, 2, 2, 3}), Tensor({1, 1, 2, 2, 2})),
               prp::InputError);
  EXPECT_THROW(generative_loss(Tensor({1, 1, 2, 2, 2}), Tensor({1, 1, 2, 2, 2}), Tensor({1, 1, 2, 2, 3})),
               prp::InputError);
}

TEST(Joint, WeightedSum) {
  EXPECT_NEAR(joint_loss(2.0, 3.0, {}), 3.2, 1e-12);
  EXPECT_EQ(joint_loss(2.0, 3.0, {1.0, 0.0}), 2.0);
  EXPECT_EQ(joint_loss(2.0, 3.0, {0.0, 1.0}), 3.0);
  EXPECT_THROW((LossWeights{0.0, 0.0}).validate(), prp::ConfigError);
  EXPECT_THROW((LossWeights{-0.1, 1.0}).validate(), prp::ConfigError);
}
