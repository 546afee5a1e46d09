#pragma once

#include "pprompt/core.hpp"
#include "pprompt/encoders.hpp"
#include "pprompt/world.hpp"

namespace pprompt {

struct LikelihoodConfig {
  double temperature = 0.07;

  void validate() const {
    detail::require(std::isfinite(temperature) && temperature > 0.0,
                    ErrorCode::invalid_argument, "likelihood.temperature must be positive");
  }
};

struct PriorConfig {
  double sigma = 1.0;
  bool enabled = true;

  void validate() const {
    detail::require(std::isfinite(sigma) && sigma > 0.0, ErrorCode::invalid_argument,
                    "prior.sigma must be positive");
  }
};

struct EnergyReport {
  double value = 0.0;
  Vector grad;
  double nll_part = 0.0;
  double prior_part = 0.0;
};

namespace detail {

inline double cosine(const Vector& a, const Vector& b, double na, double nb) {
  return a.dot(b) / (na * nb);
}

inline double checked_norm(const Vector& v, const char* what) {
  const double n = v.norm();
  require(std::isfinite(n), ErrorCode::non_finite, std::string("non-finite ") + what);
  require(n > 0.0, ErrorCode::invalid_argument,
          std::string("zero-norm ") + what + ": cosine similarity undefined");
  return n;
}

// Cross-entropy of one instance against the class text features `texts`
// (p×C, one column per class). When `grad_texts` is non-null it receives
// ∂loss/∂texts with the same layout.
inline double instance_cross_entropy(const Matrix& texts, const Vector& x, int label,
                                     double temperature, Matrix* grad_texts) {
  const Index C = texts.cols();
  const double nx = checked_norm(x, "image feature");
  Vector norms(C);
  Vector logits(C);
  for (Index k = 0; k < C; ++k) {
    norms(k) = checked_norm(texts.col(k), "text feature");
    logits(k) = cosine(texts.col(k), x, norms(k), nx) / temperature;
  }
  const double loss = log_sum_exp(logits) - logits(label);
  if (grad_texts) {
    Vector dlogits = softmax(logits);
    dlogits(label) -= 1.0;
    grad_texts->resize(texts.rows(), C);
    for (Index k = 0; k < C; ++k) {
      const double sim = logits(k) * temperature;
      // ∂cos(t, x)/∂t = x/(|t||x|) − cos · t/|t|²
      grad_texts->col(k) = (dlogits(k) / temperature) *
                           (x / (norms(k) * nx) - (sim / (norms(k) * norms(k))) * texts.col(k));
    }
  }
  return loss;
}

}  // namespace detail

/// Summed softmax cross-entropy of a shared context over all training pairs.
inline double cross_entropy(const FrozenEncoders& enc, const LikelihoodConfig& cfg,
                            const Vector& theta, const FewShotTask& task) {
  const Matrix texts = enc.text_features(theta);
  const auto& X = task.train.features;
  detail::require_dim(X.cols(), enc.feature_dim(), "task features");
  double total = 0.0;
  for (Index i = 0; i < X.rows(); ++i)
    total += detail::instance_cross_entropy(texts, X.row(i).transpose(), task.train.labels[i],
                                            cfg.temperature, nullptr);
  return total;
}

inline double cross_entropy_with_grad(const FrozenEncoders& enc, const LikelihoodConfig& cfg,
                                      const Vector& theta, const FewShotTask& task, Vector& grad) {
  const Matrix texts = enc.text_features(theta);
  const auto& X = task.train.features;
  detail::require_dim(X.cols(), enc.feature_dim(), "task features");
  double total = 0.0;
  // Every class column shares ∂t_k/∂θ = W_θ, so accumulate Σ_k ∂L/∂t_k first.
  Vector text_grad_sum = Vector::Zero(enc.feature_dim());
  Matrix grad_texts;
  for (Index i = 0; i < X.rows(); ++i) {
    total += detail::instance_cross_entropy(texts, X.row(i).transpose(), task.train.labels[i],
                                            cfg.temperature, &grad_texts);
    text_grad_sum += grad_texts.rowwise().sum();
  }
  grad = enc.context_jacobian().transpose() * text_grad_sum;
  return total;
}

inline Vector cross_entropy_grad(const FrozenEncoders& enc, const LikelihoodConfig& cfg,
                                 const Vector& theta, const FewShotTask& task) {
  Vector grad;
  cross_entropy_with_grad(enc, cfg, theta, task, grad);
  return grad;
}

/// log p(θ|X) up to a constant: −‖θ − φ̄‖²/σ². No ½ factor.
inline double prior_log_density(const PriorConfig& pcfg, const Vector& theta,
                                const Vector& prior_mean_bar) {
  detail::require_dim(prior_mean_bar.size(), theta.size(), "prior_mean_bar");
  return -(theta - prior_mean_bar).squaredNorm() / (pcfg.sigma * pcfg.sigma);
}

/// V(θ) = −log p(Y|X,θ) − log p(θ|X) with its analytic gradient.
inline EnergyReport energy(const FrozenEncoders& enc, const LikelihoodConfig& cfg,
                           const PriorConfig& pcfg, const Vector& theta, const FewShotTask& task,
                           const Vector& prior_mean_bar) {
  EnergyReport r;
  r.nll_part = cross_entropy_with_grad(enc, cfg, theta, task, r.grad);
  if (pcfg.enabled) {
    r.prior_part = -prior_log_density(pcfg, theta, prior_mean_bar);
    r.grad += (2.0 / (pcfg.sigma * pcfg.sigma)) * (theta - prior_mean_bar);
  }
  r.value = r.nll_part + r.prior_part;
  return r;
}

// Binds everything except θ, so samplers can treat the posterior as a
// callable θ ↦ EnergyReport.
class PosteriorEnergy {
 public:
  PosteriorEnergy(const FrozenEncoders& enc, LikelihoodConfig cfg, PriorConfig pcfg,
                  const FewShotTask& task, Vector prior_mean_bar)
      : enc_(&enc), cfg_(cfg), pcfg_(pcfg), task_(&task), prior_mean_bar_(std::move(prior_mean_bar)) {
    cfg_.validate();
    pcfg_.validate();
    detail::require(task.train.size() > 0, ErrorCode::invalid_argument, "empty training split");
    if (pcfg_.enabled) detail::require_dim(prior_mean_bar_.size(), enc.context_dim(), "prior_mean_bar");
    else if (prior_mean_bar_.size() == 0) prior_mean_bar_ = Vector::Zero(enc.context_dim());
  }

  EnergyReport operator()(const Vector& theta) const {
    return energy(*enc_, cfg_, pcfg_, theta, *task_, prior_mean_bar_);
  }

 private:
  const FrozenEncoders* enc_;
  LikelihoodConfig cfg_;
  PriorConfig pcfg_;
  const FewShotTask* task_;
  Vector prior_mean_bar_;
};

}  // namespace pprompt
