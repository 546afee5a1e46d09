#pragma once

#include <vector>

#include "pprompt/energy.hpp"

namespace pprompt {

struct PriorTrainConfig {
  int steps = 100;
  double learning_rate = 0.001;
  int log_every = 1;

  void validate() const {
    const auto bad = ErrorCode::invalid_argument;
    detail::require(steps >= 1, bad, "prior_train.steps must be >= 1");
    detail::require(std::isfinite(learning_rate) && learning_rate >= 0.0, bad,
                    "prior_train.learning_rate must be non-negative");
    detail::require(log_every >= 1, bad, "prior_train.log_every must be >= 1");
  }
};

// Full-batch steps scaled from the per-shot epoch schedule {10, 20, 20, 40, 40} × 5.
inline int default_prior_steps(int shots) {
  if (shots <= 1) return 50;
  if (shots <= 4) return 100;
  return 200;
}

struct PriorGrad {
  Matrix A;
  Vector b;
};

struct LossPoint {
  int step;
  double loss;
};

struct PriorTrainResult {
  PriorNet net;
  std::vector<LossPoint> trace;
};

/// Cross-entropy where instance i is classified with its own context φ(f(x_i)).
inline double prior_ce_loss(const FrozenEncoders& enc, const LikelihoodConfig& cfg,
                            const PriorNet& net, const FewShotTask& task, PriorGrad* grad = nullptr) {
  const auto& X = task.train.features;
  detail::require_dim(X.cols(), enc.feature_dim(), "task features");
  detail::require_dim(net.context_dim(), enc.context_dim(), "prior net output");
  if (grad) {
    grad->A = Matrix::Zero(net.A.rows(), net.A.cols());
    grad->b = Vector::Zero(net.b.size());
  }
  double total = 0.0;
  Matrix grad_texts;
  for (Index i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i).transpose();
    const Vector theta = prior_mean(net, x);
    const Matrix texts = enc.text_features(theta);
    total += detail::instance_cross_entropy(texts, x, task.train.labels[i], cfg.temperature,
                                            grad ? &grad_texts : nullptr);
    if (grad) {
      const Vector g_theta = enc.context_jacobian().transpose() * grad_texts.rowwise().sum();
      grad->A.noalias() += g_theta * x.transpose();
      grad->b += g_theta;
    }
  }
  return total;
}

/// Plain full-batch gradient descent on prior_ce_loss. The trace holds the
/// loss at step 0 and every `log_every` steps after, plus the final loss.
inline PriorTrainResult train_prior(const FrozenEncoders& enc, const LikelihoodConfig& cfg,
                                    PriorNet net, const FewShotTask& task,
                                    const PriorTrainConfig& tcfg) {
  cfg.validate();
  tcfg.validate();
  detail::require(task.train.size() > 0, ErrorCode::invalid_argument, "empty training split");
  PriorTrainResult out;
  PriorGrad grad;
  for (int step = 0; step <= tcfg.steps; ++step) {
    const bool last = step == tcfg.steps;
    double loss = 0.0;
    try {
      loss = prior_ce_loss(enc, cfg, net, task, last ? nullptr : &grad);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::non_finite) throw;
      loss = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(loss))
      throw Error(ErrorCode::non_finite,
                  "prior training: non-finite loss at step " + std::to_string(step));
    if (step % tcfg.log_every == 0 || last) out.trace.push_back({step, loss});
    if (last) break;
    net.A -= tcfg.learning_rate * grad.A;
    net.b -= tcfg.learning_rate * grad.b;
  }
  out.net = std::move(net);
  return out;
}

/// φ̄ = (1/N) Σ φ(f(x_i)) over the training features.
inline Vector compute_prior_mean_bar(const PriorNet& net, const FewShotTask& task) {
  const auto& X = task.train.features;
  detail::require(X.rows() > 0, ErrorCode::invalid_argument, "empty training split");
  detail::require_dim(X.cols(), net.feature_dim(), "task features");
  // Affine, so the mean of outputs is the output at the mean input.
  const Vector mean_x = X.colwise().mean().transpose();
  return net.A * mean_x + net.b;
}

}  // namespace pprompt
