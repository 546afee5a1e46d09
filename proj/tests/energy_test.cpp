#include <gtest/gtest.h>

#include "test_support.hpp"

namespace pprompt {
namespace {

using testing::central_diff;
using testing::rel_err;

struct Draw {
  FrozenEncoders enc;
  FewShotTask task;
  Vector theta;
  Vector bar;
};

Draw random_draw(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WorldSpec w = testing::small_world(seed, 1 + static_cast<int>(seed % 3));
  FewShotTask task = generate_task(w);
  FrozenEncoders enc(5, w.feature_dim, w.num_classes, seed + 100, class_prototypes(w), 0.5 * (seed % 2));
  return {std::move(enc), std::move(task), testing::random_vector(5, rng, 0.5),
          testing::random_vector(5, rng, 0.5)};
}

TEST(CrossEntropy, SingleClassIsZero) {
  std::mt19937_64 rng(1);
  FrozenEncoders enc(3, 4, 1, 5);
  const auto task = testing::manual_task(testing::random_matrix(6, 4, rng), {0, 0, 0, 0, 0, 0}, 1);
  const Vector theta = testing::random_vector(3, rng);
  EXPECT_EQ(cross_entropy(enc, {}, theta, task), 0.0);
  EXPECT_EQ(cross_entropy_grad(enc, {}, theta, task), Vector::Zero(3));
}

TEST(CrossEntropy, IdenticalClassFeaturesGiveLogC) {
  std::mt19937_64 rng(2);
  const Matrix E = Matrix::Ones(4, 3) * 0.3;  // every class token identical
  FrozenEncoders enc(testing::random_matrix(5, 6, rng), E);
  const auto task = testing::manual_task(testing::random_matrix(7, 5, rng), {0, 1, 2, 3, 0, 1, 2}, 4);
  EXPECT_NEAR(cross_entropy(enc, {}, testing::random_vector(3, rng), task), 7 * std::log(4.0), 1e-12);
}

TEST(CrossEntropy, HandSoftmax) {
  // d = 1: t_y = a·θ + b·e_y with a = [1, 0], b = [-1, 1], θ = 1, e = (0, 1)
  // gives t_0 = [1, 0], t_1 = [0, 1]; x = [1, 0] so similarities are (1, 0).
  Matrix W(2, 2);
  W << 1, -1, 0, 1;
  Matrix E(2, 1);
  E << 0, 1;
  FrozenEncoders enc(W, E);
  const auto task = testing::manual_task(Matrix{{1.0, 0.0}}, {0}, 2);
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  EXPECT_NEAR(cross_entropy(enc, {1.0}, Vector::Ones(1), task), expected, 1e-12);
  EXPECT_NEAR(expected, 0.313262, 1e-6);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Draw d = random_draw(s);
    const LikelihoodConfig cfg{0.07 + 0.1 * (s % 3)};
    const Vector g = cross_entropy_grad(d.enc, cfg, d.theta, d.task);
    const Vector fd = central_diff([&](const Vector& t) { return cross_entropy(d.enc, cfg, t, d.task); }, d.theta);
    EXPECT_LT(rel_err(g, fd), 1e-5) << "seed " << s;
  }
}

TEST(CrossEntropy, GradientInvariantToImageRescaling) {
  Draw d = random_draw(4);
  const Vector before = cross_entropy_grad(d.enc, {}, d.theta, d.task);
  d.task.train.features.row(2) *= 7.5;
  const Vector after = cross_entropy_grad(d.enc, {}, d.theta, d.task);
  EXPECT_LT(rel_err(before, after), 1e-12);
}

TEST(CrossEntropy, ZeroNormFeatureRejected) {
  Draw d = random_draw(1);
  d.task.train.features.row(0).setZero();
  EXPECT_THROW(cross_entropy(d.enc, {}, d.theta, d.task), Error);
}

TEST(PriorLogDensity, Cases) {
  const PriorConfig unit{1.0, true};
  const Vector bar = Vector::Constant(3, 0.4);
  EXPECT_EQ(prior_log_density(unit, bar, bar), 0.0);
  EXPECT_DOUBLE_EQ(prior_log_density(unit, Vector::Constant(1, 2.0), Vector::Zero(1)), -4.0);
  const Vector theta = Vector::Constant(3, 1.7);
  EXPECT_DOUBLE_EQ(prior_log_density({2.0, true}, theta, bar), prior_log_density(unit, theta, bar) / 4.0);
}

TEST(Energy, PriorDisabledIsCrossEntropy) {
  const Draw d = random_draw(2);
  const auto r = energy(d.enc, {}, {1.0, false}, d.theta, d.task, d.bar);
  EXPECT_EQ(r.value, cross_entropy(d.enc, {}, d.theta, d.task));
  EXPECT_EQ(r.prior_part, 0.0);
}

TEST(Energy, GradientMatchesFiniteDifferences) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Draw d = random_draw(s);
    const PriorConfig pcfg{0.5 + 0.5 * (s % 3), s % 4 != 3};
    const auto r = energy(d.enc, {}, pcfg, d.theta, d.task, d.bar);
    EXPECT_LT(std::abs(r.value - (r.nll_part + r.prior_part)), 1e-12);
    const Vector fd = central_diff(
        [&](const Vector& t) { return energy(d.enc, {}, pcfg, t, d.task, d.bar).value; }, d.theta);
    EXPECT_LT(rel_err(r.grad, fd), 1e-5) << "seed " << s;
  }
}

TEST(Energy, PriorMinimumAtMeanBar) {
  const Draw d = random_draw(5);
  const PriorConfig pcfg{1.0, true};
  const auto at_bar = energy(d.enc, {}, pcfg, d.bar, d.task, d.bar);
  EXPECT_EQ(at_bar.prior_part, 0.0);
  EXPECT_LT((at_bar.grad - cross_entropy_grad(d.enc, {}, d.bar, d.task)).norm(), 1e-14);
  const auto off = energy(d.enc, {}, pcfg, d.theta, d.task, d.bar);
  EXPECT_GT(off.prior_part, 0.0);
}

TEST(Energy, CosineScaleInvariance) {
  Draw d = random_draw(6);
  const PriorConfig pcfg{1.0, true};
  const double before = energy(d.enc, {}, pcfg, d.theta, d.task, d.bar).value;
  d.task.train.features *= 3.25;
  d.task.train.features.row(0) *= 0.01;
  EXPECT_NEAR(energy(d.enc, {}, pcfg, d.theta, d.task, d.bar).value, before, 1e-10);
}

}  // namespace
}  // namespace pprompt
