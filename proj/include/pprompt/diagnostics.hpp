#pragma once

#include <vector>

#include "pprompt/adaptation.hpp"
#include "pprompt/kmeans.hpp"

namespace pprompt {

struct ClusterDiag {
  int k = 0;
  std::vector<int> counts;
  double variance = 0.0;  // population variance of counts
};

inline double population_variance(const std::vector<int>& counts) {
  if (counts.empty()) return 0.0;
  const double n = static_cast<double>(counts.size());
  double mean = 0.0;
  for (int c : counts) mean += c;
  mean /= n;
  double var = 0.0;
  for (int c : counts) var += (c - mean) * (c - mean);
  return var / n;
}

namespace detail {

inline Matrix normalize_rows(Matrix m) {
  for (Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0.0) m.row(i) /= n;
  }
  return m;
}

}  // namespace detail

/// All M·C text features g(θ^i, y), one per row. With adaptation on, each is
/// blended toward g(φ̄', y) where φ̄' is the mean prior output over the test
/// features.
inline Matrix ensemble_text_features(const FrozenEncoders& enc, const PriorNet& net,
                                     const ContextEnsemble& ensemble, const FewShotTask& task,
                                     const AdaptConfig& acfg) {
  acfg.validate();
  const int C = enc.num_classes();
  Matrix generated;
  if (acfg.enabled) {
    const Vector mean_test = task.test.features.colwise().mean().transpose();
    generated = enc.text_features(prior_mean(net, mean_test));
  }
  Matrix rows(ensemble.size() * C, enc.feature_dim());
  for (Index i = 0; i < ensemble.size(); ++i) {
    Matrix texts = enc.text_features(ensemble.particles.row(i).transpose());
    if (acfg.enabled) texts = acfg.alpha * texts + (1.0 - acfg.alpha) * generated;
    rows.middleRows(i * C, C) = texts.transpose();
  }
  return rows;
}

/// Fits k-means on the test image features and counts how many text features
/// land in each cluster. Lower count variance means the prompts cover more of
/// the image-feature modes.
inline ClusterDiag prompt_cluster_variance(const FrozenEncoders& enc, const PriorNet& net,
                                           const ContextEnsemble& ensemble, const FewShotTask& task,
                                           int k, const AdaptConfig& acfg, std::uint64_t seed,
                                           bool normalize = true, int max_iter = 100) {
  detail::require(task.test.size() >= k, ErrorCode::invalid_argument,
                  "prompt_cluster_variance: fewer test features than clusters");
  const Matrix images = normalize ? detail::normalize_rows(task.test.features) : task.test.features;
  Matrix texts = ensemble_text_features(enc, net, ensemble, task, acfg);
  if (normalize) texts = detail::normalize_rows(std::move(texts));

  const KMeansResult km = kmeans(images, k, seed, max_iter);
  ClusterDiag diag;
  diag.k = k;
  diag.counts.assign(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < texts.rows(); ++i) ++diag.counts[detail::nearest_centroid(km.centroids, texts.row(i))];
  diag.variance = population_variance(diag.counts);
  return diag;
}

}  // namespace pprompt
