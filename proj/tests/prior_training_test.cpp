#include <gtest/gtest.h>

#include <algorithm>

#include "test_support.hpp"

namespace pprompt {
namespace {

struct Setup {
  WorldSpec world;
  FewShotTask task;
  FrozenEncoders enc;
};

Setup default_world(std::uint64_t seed) {
  RunConfig c = with_seed(RunConfig{}, seed);
  FewShotTask task = generate_task(c.world);
  return {c.world, std::move(task), make_encoders(c)};
}

TEST(PriorCeLoss, SingleClassIsZero) {
  std::mt19937_64 rng(1);
  FrozenEncoders enc(3, 4, 1, 5);
  const auto task = testing::manual_task(testing::random_matrix(4, 4, rng), {0, 0, 0, 0}, 1);
  PriorNet net{testing::random_matrix(3, 4, rng), testing::random_vector(3, rng)};
  EXPECT_EQ(prior_ce_loss(enc, {}, net, task), 0.0);
}

TEST(PriorCeLoss, ConstantMapReducesToSharedContext) {
  const auto s = default_world(3);
  std::mt19937_64 rng(3);
  PriorNet net = PriorNet::zeros(16, 32);
  net.b = testing::random_vector(16, rng, 0.3);
  EXPECT_NEAR(prior_ce_loss(s.enc, {}, net, s.task), cross_entropy(s.enc, {}, net.b, s.task), 1e-12);
}

TEST(PriorCeLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    WorldSpec w = testing::small_world(seed, 2);
    const auto task = generate_task(w);
    FrozenEncoders enc(4, w.feature_dim, w.num_classes, seed, class_prototypes(w), 0.5);
    std::mt19937_64 rng(seed);
    PriorNet net{testing::random_matrix(4, w.feature_dim, rng, 0.1), testing::random_vector(4, rng, 0.1)};
    const LikelihoodConfig cfg{0.2};
    PriorGrad grad;
    prior_ce_loss(enc, cfg, net, task, &grad);

    const Matrix fdA = testing::central_diff_matrix(
        [&](const Matrix& A) { return prior_ce_loss(enc, cfg, PriorNet{A, net.b}, task); }, net.A);
    const Vector fdb = testing::central_diff(
        [&](const Vector& b) { return prior_ce_loss(enc, cfg, PriorNet{net.A, b}, task); }, net.b);
    EXPECT_LT(testing::rel_err(grad.A, fdA), 1e-5);
    EXPECT_LT(testing::rel_err(grad.b, fdb), 1e-5);
  }
}

TEST(TrainPrior, ZeroLearningRateLeavesNetUnchanged) {
  const auto s = default_world(1);
  std::mt19937_64 rng(1);
  PriorNet net{testing::random_matrix(16, 32, rng, 0.01), testing::random_vector(16, rng, 0.1)};
  const auto r = train_prior(s.enc, {}, net, s.task, {10, 0.0, 1});
  EXPECT_EQ(r.net, net);
  ASSERT_EQ(r.trace.size(), 11u);
  for (const auto& p : r.trace) EXPECT_EQ(p.loss, r.trace.front().loss);
}

TEST(TrainPrior, TraceFollowsLogEvery) {
  const auto s = default_world(1);
  const auto r = train_prior(s.enc, {}, PriorNet::zeros(16, 32), s.task, {10, 0.001, 4});
  std::vector<int> steps;
  for (const auto& p : r.trace) steps.push_back(p.step);
  EXPECT_EQ(steps, (std::vector<int>{0, 4, 8, 10}));
}

TEST(TrainPrior, DescendsOverSeeds) {
  std::vector<double> initial, final;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto s = default_world(seed);
    const auto r = train_prior(s.enc, {}, PriorNet::zeros(16, 32), s.task, {100, 0.001, 10});
    initial.push_back(r.trace.front().loss);
    final.push_back(r.trace.back().loss);
    EXPECT_LT(final.back(), initial.back()) << "seed " << seed;
    const double n = static_cast<double>(s.task.train.size());
    EXPECT_GT(std::log(5.0) - final.back() / n, 0.0) << "seed " << seed;
  }
  std::nth_element(initial.begin(), initial.begin() + 5, initial.end());
  std::nth_element(final.begin(), final.begin() + 5, final.end());
  EXPECT_LT(final[5], initial[5]);
}

TEST(TrainPrior, NonFiniteLossAbortsNamingStep) {
  const auto s = default_world(2);
  PriorNet net = PriorNet::zeros(16, 32);
  net.A(3, 4) = std::numeric_limits<double>::quiet_NaN();
  try {
    train_prior(s.enc, {}, net, s.task, {50, 0.001, 1});
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_finite);
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
}

TEST(PriorMeanBar, Cases) {
  std::mt19937_64 rng(4);
  const Matrix X = testing::random_matrix(5, 3, rng);
  auto task = testing::manual_task(X, {0, 1, 0, 1, 0}, 2);

  PriorNet constant = PriorNet::zeros(2, 3);
  constant.b << 0.25, -2.0;
  EXPECT_LT((compute_prior_mean_bar(constant, task) - constant.b).norm(), 1e-15);

  PriorNet net{testing::random_matrix(2, 3, rng), testing::random_vector(2, rng)};
  auto single = testing::manual_task(X.topRows(1), {0}, 2);
  EXPECT_LT((compute_prior_mean_bar(net, single) - prior_mean(net, X.row(0).transpose())).norm(), 1e-15);

  // Outputs [1, 0] and [3, 2] average to [2, 1].
  PriorNet id{Matrix::Identity(2, 2), Vector::Zero(2)};
  auto two = testing::manual_task(Matrix{{1.0, 0.0}, {3.0, 2.0}}, {0, 1}, 2);
  const Vector bar = compute_prior_mean_bar(id, two);
  EXPECT_DOUBLE_EQ(bar(0), 2.0);
  EXPECT_DOUBLE_EQ(bar(1), 1.0);

  auto permuted = task;
  permuted.train.features = X.colwise().reverse();
  EXPECT_LT((compute_prior_mean_bar(net, permuted) - compute_prior_mean_bar(net, task)).norm(), 1e-12);

  auto empty = testing::manual_task(Matrix(0, 3), {}, 2);
  EXPECT_THROW(compute_prior_mean_bar(net, empty), Error);
}

}  // namespace
}  // namespace pprompt
