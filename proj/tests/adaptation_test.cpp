#include <gtest/gtest.h>

#include "test_support.hpp"

namespace pprompt {
namespace {

struct Trained {
  RunConfig cfg;
  PipelineResult run;
};

Trained trained(std::uint64_t seed) {
  RunConfig c = with_seed(RunConfig{}, seed);
  c.sampler.steps = 100;
  return {c, run_pipeline(c)};
}

TEST(AdaptedTextFeature, EndpointsAreExact) {
  const auto t = trained(1);
  const auto& enc = t.run.encoders;
  const auto& net = t.run.prior.net;
  const Vector theta = t.run.sampler.ensemble.particles.row(0).transpose();
  const Vector x = t.run.task.test.features.row(3).transpose();
  for (int y = 0; y < enc.num_classes(); ++y) {
    EXPECT_EQ(adapted_text_feature(enc, net, theta, y, x, {1.0, true}), enc.text_feature(theta, y));
    EXPECT_EQ(adapted_text_feature(enc, net, theta, y, x, {0.0, true}),
              enc.text_feature(prior_mean(net, x), y));
    EXPECT_EQ(adapted_text_feature(enc, net, theta, y, x, {0.3, false}), enc.text_feature(theta, y));
  }
}

TEST(AdaptedTextFeature, HandBlend) {
  // W_θ = I, W_class = 0: g(θ, y) = θ. θ = [1, 0] and φ(x) = [0, 1].
  Matrix W = Matrix::Zero(2, 4);
  W.leftCols(2) = Matrix::Identity(2, 2);
  FrozenEncoders enc(W, Matrix::Zero(1, 2));
  PriorNet net = PriorNet::zeros(2, 2);
  net.b << 0, 1;
  const Vector out = adapted_text_feature(enc, net, Vector::Unit(2, 0), 0, Vector::Ones(2), {0.9, true});
  EXPECT_NEAR(out(0), 0.9, 1e-15);
  EXPECT_NEAR(out(1), 0.1, 1e-15);
}

TEST(AdaptedTextFeature, AlphaOutOfRange) {
  FrozenEncoders enc(2, 2, 2, 0);
  EXPECT_THROW(adapted_text_feature(enc, PriorNet::zeros(2, 2), Vector::Zero(2), 0, Vector::Ones(2), {1.2, true}),
               Error);
}

TEST(Predict, HandSoftmax) {
  // Same construction as the cross-entropy hand case: similarities (1, 0).
  Matrix W(2, 2);
  W << 1, -1, 0, 1;
  Matrix E(2, 1);
  E << 0, 1;
  FrozenEncoders enc(W, E);
  ContextEnsemble e{Matrix::Ones(1, 1)};
  const auto p = predict(enc, PriorNet::zeros(1, 2), e, Vector::Unit(2, 0), {1.0}, {1.0, false});
  const double ee = std::exp(1.0);
  EXPECT_NEAR(p.probs(0), ee / (ee + 1), 1e-15);
  EXPECT_NEAR(p.probs(1), 1 / (ee + 1), 1e-15);
  EXPECT_NEAR(p.probs(0), 0.7311, 1e-4);
  EXPECT_EQ(p.label, 0);
}

TEST(Predict, IdenticalParticlesMatchSingle) {
  const auto t = trained(2);
  const Vector x = t.run.task.test.features.row(0).transpose();
  ContextEnsemble one{t.run.sampler.ensemble.particles.topRows(1)};
  ContextEnsemble many{one.particles.replicate(4, 1)};
  const auto a = predict(t.run.encoders, t.run.prior.net, one, x, t.cfg.likelihood, t.cfg.adapt);
  const auto b = predict(t.run.encoders, t.run.prior.net, many, x, t.cfg.likelihood, t.cfg.adapt);
  EXPECT_LT((a.probs - b.probs).norm(), 1e-15);
}

TEST(Predict, Properties) {
  const auto t = trained(3);
  const auto& enc = t.run.encoders;
  const auto& ens = t.run.sampler.ensemble;
  Eigen::PermutationMatrix<Eigen::Dynamic> rows(ens.size());
  rows.setIdentity();
  rows.indices().reverseInPlace();
  ContextEnsemble reversed{rows * ens.particles};
  for (Index i = 0; i < 10; ++i) {
    const Vector x = t.run.task.test.features.row(i).transpose();
    const auto p = predict(enc, t.run.prior.net, ens, x, t.cfg.likelihood, t.cfg.adapt);
    EXPECT_NEAR(p.probs.sum(), 1.0, 1e-12);
    EXPECT_GE(p.probs.minCoeff(), 0.0);

    const auto q = predict(enc, t.run.prior.net, reversed, x, t.cfg.likelihood, t.cfg.adapt);
    EXPECT_LT((p.probs - q.probs).norm(), 1e-12);

    // Scaling the image feature leaves cosine-only predictions unchanged.
    const AdaptConfig off{1.0, false};
    const auto base = predict(enc, t.run.prior.net, ens, x, t.cfg.likelihood, off);
    const auto scaled = predict(enc, t.run.prior.net, ens, Vector(4.0 * x), t.cfg.likelihood, off);
    EXPECT_LT((base.probs - scaled.probs).norm(), 1e-12);

    // A different temperature is a strictly increasing map of the logits.
    const auto sharper = predict(enc, t.run.prior.net, ContextEnsemble{ens.particles.topRows(1)}, x,
                                 {0.01}, t.cfg.adapt);
    const auto flatter = predict(enc, t.run.prior.net, ContextEnsemble{ens.particles.topRows(1)}, x,
                                 {1.0}, t.cfg.adapt);
    EXPECT_EQ(sharper.label, flatter.label);
  }
}

TEST(Predict, ClassPermutationEquivariance) {
  std::mt19937_64 rng(5);
  const Matrix W = testing::random_matrix(6, 8, rng);
  const Matrix E = testing::random_matrix(3, 4, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
  perm.indices() << 2, 0, 1;
  FrozenEncoders enc(W, E), penc(W, perm * E);
  ContextEnsemble ens{testing::random_matrix(3, 4, rng)};
  const Vector x = testing::random_vector(6, rng);
  const PriorNet net{testing::random_matrix(4, 6, rng), testing::random_vector(4, rng)};
  const auto p = predict(enc, net, ens, x, {0.5}, {0.8, true});
  const auto q = predict(penc, net, ens, x, {0.5}, {0.8, true});
  EXPECT_LT((q.probs - perm * p.probs).norm(), 1e-12);
}

TEST(Predict, TiesBreakToLowestClass) {
  FrozenEncoders enc(Matrix{{1, 0}, {0, 0}}, Matrix::Zero(3, 1));
  ContextEnsemble ens{Matrix::Ones(1, 1)};
  EXPECT_EQ(predict(enc, PriorNet::zeros(1, 2), ens, Vector::Unit(2, 0), {1.0}, {1.0, false}).label, 0);
}

TEST(EvaluateAccuracy, SingleCorrectInstance) {
  Matrix W(2, 2);
  W << 1, -1, 0, 1;
  Matrix E(2, 1);
  E << 0, 1;
  FrozenEncoders enc(W, E);
  auto task = testing::manual_task(Matrix{{0.0, 1.0}}, {1}, 2);
  const auto r = evaluate_accuracy(enc, PriorNet::zeros(1, 2), ContextEnsemble{Matrix::Ones(1, 1)}, task, {1.0},
                                   {1.0, false});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.per_class(1), 1.0);
  EXPECT_TRUE(std::isnan(r.per_class(0)));
  ASSERT_EQ(r.predictions.size(), 1u);
}

TEST(EvaluateAccuracy, ChanceLevelForUntrainedRandomEncoders) {
  double total = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    RunConfig c = with_seed(RunConfig{}, s);
    c.encoder.alignment = 0.0;
    const auto task = generate_task(c.world);
    const auto r = evaluate_accuracy(make_encoders(c), PriorNet::zeros(16, 32), initial_ensemble(c), task,
                                     c.likelihood, {1.0, false});
    total += r.accuracy;
  }
  const double mean = total / 10;
  EXPECT_GE(mean, 0.2 - 0.15);
  EXPECT_LE(mean, 0.2 + 0.15);
}

TEST(EvaluateAccuracy, FitsItsOwnTrainingSetOnEasyWorld) {
  RunConfig c = with_seed(RunConfig{}, 1);
  c.encoder.alignment = 1.0;
  c.world.noise_std = 0.1;
  c.world.shots_per_class = 8;
  c.prior.enabled = false;
  c.sampler.method = Method::sgd;
  auto task = generate_task(c.world);
  task.test = task.train;
  const auto enc = make_encoders(c);
  const auto sampled = sampler_stage(c, enc, task, PriorNet::zeros(16, 32), initial_ensemble(c));
  const double ce = cross_entropy(enc, c.likelihood, sampled.ensemble.particles.row(0).transpose(), task);
  EXPECT_LT(ce / task.train.size(), 0.05);
  EXPECT_GE(evaluate_accuracy(enc, PriorNet::zeros(16, 32), sampled.ensemble, task, c.likelihood, {1.0, false})
                .accuracy,
            0.95);
}

TEST(EvaluateAccuracy, EmptyTestSplitRejected) {
  auto task = testing::manual_task(Matrix::Ones(1, 2), {0}, 2);
  task.test = {};
  task.test.features = Matrix(0, 2);
  EXPECT_THROW(evaluate_accuracy(FrozenEncoders(1, 2, 2, 0), PriorNet::zeros(1, 2),
                                 ContextEnsemble{Matrix::Ones(1, 1)}, task, {}, {}),
               Error);
}

}  // namespace
}  // namespace pprompt
