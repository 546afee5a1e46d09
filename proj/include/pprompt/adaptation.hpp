#pragma once

#include <vector>

#include "pprompt/energy.hpp"
#include "pprompt/samplers.hpp"

namespace pprompt {

// Test-time blend of the learned text feature with the one generated from
// the prior mean of the test feature.
struct AdaptConfig {
  double alpha = 0.9;
  bool enabled = true;

  void validate() const {
    detail::require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::invalid_argument,
                    "adapt.alpha must lie in [0, 1]");
  }
};

inline constexpr double kInDistributionAlpha = 0.9;
inline constexpr double kShiftedAlpha = 0.7;

/// α·g(θ, y) + (1 − α)·g(φ(x'), y), or g(θ, y) when adaptation is off.
inline Vector adapted_text_feature(const FrozenEncoders& enc, const PriorNet& net,
                                   const Vector& theta, int y, const Vector& x_feature,
                                   const AdaptConfig& acfg) {
  acfg.validate();
  Vector learned = enc.text_feature(theta, y);
  if (!acfg.enabled) return learned;
  const Vector generated = enc.text_feature(prior_mean(net, x_feature), y);
  return acfg.alpha * learned + (1.0 - acfg.alpha) * generated;
}

struct Prediction {
  Vector probs;
  int label = 0;
};

namespace detail {

inline int argmax_lowest(const Vector& v) {
  int best = 0;
  for (Index k = 1; k < v.size(); ++k)
    if (v(k) > v(best)) best = static_cast<int>(k);
  return best;
}

inline Vector class_probs(const Matrix& texts, const Vector& x, double temperature) {
  const double nx = checked_norm(x, "image feature");
  Vector logits(texts.cols());
  for (Index k = 0; k < texts.cols(); ++k)
    logits(k) = cosine(texts.col(k), x, checked_norm(texts.col(k), "text feature"), nx) / temperature;
  return softmax(logits);
}

}  // namespace detail

/// Particle-averaged predictive distribution for one test feature.
inline Prediction predict(const FrozenEncoders& enc, const PriorNet& net,
                          const ContextEnsemble& ensemble, const Vector& x_feature,
                          const LikelihoodConfig& cfg, const AdaptConfig& acfg) {
  acfg.validate();
  detail::require(ensemble.size() >= 1, ErrorCode::invalid_argument, "empty ensemble");
  detail::require_dim(x_feature.size(), enc.feature_dim(), "x_feature");
  const int C = enc.num_classes();
  Matrix generated;
  if (acfg.enabled) generated = enc.text_features(prior_mean(net, x_feature));

  Prediction out;
  out.probs = Vector::Zero(C);
  Matrix texts(enc.feature_dim(), C);
  for (Index i = 0; i < ensemble.size(); ++i) {
    const Matrix learned = enc.text_features(ensemble.particles.row(i).transpose());
    if (acfg.enabled)
      texts = acfg.alpha * learned + (1.0 - acfg.alpha) * generated;
    else
      texts = learned;
    out.probs += detail::class_probs(texts, x_feature, cfg.temperature);
  }
  out.probs /= static_cast<double>(ensemble.size());
  out.label = detail::argmax_lowest(out.probs);
  return out;
}

/// Prediction from the prior-generated text features g(φ(x'), y) alone.
inline Prediction predict_prior_only(const FrozenEncoders& enc, const PriorNet& net,
                                     const Vector& x_feature, const LikelihoodConfig& cfg) {
  Prediction out;
  out.probs = detail::class_probs(enc.text_features(prior_mean(net, x_feature)), x_feature,
                                  cfg.temperature);
  out.label = detail::argmax_lowest(out.probs);
  return out;
}

struct InstancePrediction {
  int instance;
  int label;
  int predicted;
  double max_prob;
};

struct EvalResult {
  double accuracy = 0.0;
  Vector per_class;  // NaN for classes absent from the test split
  std::vector<InstancePrediction> predictions;
};

namespace detail {

template <class PredictFn>
EvalResult evaluate_with(const FewShotTask& task, int num_classes, PredictFn&& predict_one) {
  const auto& X = task.test.features;
  require(X.rows() > 0, ErrorCode::invalid_argument, "empty test split");
  EvalResult out;
  Vector hits = Vector::Zero(num_classes);
  Vector totals = Vector::Zero(num_classes);
  int correct = 0;
  for (Index i = 0; i < X.rows(); ++i) {
    const Prediction p = predict_one(Vector(X.row(i).transpose()));
    const int label = task.test.labels[i];
    const bool hit = p.label == label;
    correct += hit;
    hits(label) += hit;
    totals(label) += 1.0;
    out.predictions.push_back({static_cast<int>(i), label, p.label, p.probs.maxCoeff()});
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(X.rows());
  out.per_class.resize(num_classes);
  for (int k = 0; k < num_classes; ++k)
    out.per_class(k) = totals(k) > 0 ? hits(k) / totals(k) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace detail

inline EvalResult evaluate_accuracy(const FrozenEncoders& enc, const PriorNet& net,
                                    const ContextEnsemble& ensemble, const FewShotTask& task,
                                    const LikelihoodConfig& cfg, const AdaptConfig& acfg) {
  return detail::evaluate_with(task, enc.num_classes(), [&](const Vector& x) {
    return predict(enc, net, ensemble, x, cfg, acfg);
  });
}

inline EvalResult evaluate_prior_only(const FrozenEncoders& enc, const PriorNet& net,
                                      const FewShotTask& task, const LikelihoodConfig& cfg) {
  return detail::evaluate_with(task, enc.num_classes(), [&](const Vector& x) {
    return predict_prior_only(enc, net, x, cfg);
  });
}

}  // namespace pprompt
