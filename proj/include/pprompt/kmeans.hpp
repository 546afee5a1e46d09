#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "pprompt/core.hpp"

namespace pprompt {

struct KMeansResult {
  Matrix centroids;              // k×p
  std::vector<int> assignments;  // one per input row
  std::vector<double> sse_trace; // within-cluster SSE after each assignment pass
  int iterations = 0;
  bool converged = false;

  double sse() const { return sse_trace.empty() ? 0.0 : sse_trace.back(); }
};

namespace detail {

inline int nearest_centroid(const Matrix& centroids, const Eigen::RowVectorXd& x) {
  int best = 0;
  double best_d = (centroids.row(0) - x).squaredNorm();
  for (Index c = 1; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

inline double within_sse(const Matrix& features, const Matrix& centroids,
                         const std::vector<int>& assign) {
  double s = 0.0;
  for (Index i = 0; i < features.rows(); ++i)
    s += (features.row(i) - centroids.row(assign[i])).squaredNorm();
  return s;
}

}  // namespace detail

/// Lloyd's algorithm. Centroids start at k distinct rows picked by `seed`;
/// a cluster that empties is re-seeded at the point farthest from its
/// current centroid.
inline KMeansResult kmeans(const Matrix& features, int k, std::uint64_t seed, int max_iter = 100) {
  const Index n = features.rows();
  detail::require(k >= 1, ErrorCode::invalid_argument, "kmeans: k must be >= 1");
  detail::require(n >= k, ErrorCode::invalid_argument,
                  "kmeans: need at least k=" + std::to_string(k) + " points, got " + std::to_string(n));
  detail::require(max_iter >= 1, ErrorCode::invalid_argument, "kmeans: max_iter must be >= 1");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  KMeansResult r;
  r.centroids.resize(k, features.cols());
  for (int c = 0; c < k; ++c) r.centroids.row(c) = features.row(order[c]);
  r.assignments.assign(static_cast<std::size_t>(n), -1);

  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const int c = detail::nearest_centroid(r.centroids, features.row(i));
      if (c != r.assignments[i]) {
        r.assignments[i] = c;
        changed = true;
      }
    }
    r.sse_trace.push_back(detail::within_sse(features, r.centroids, r.assignments));
    r.iterations = it + 1;
    if (!changed) {
      r.converged = true;
      break;
    }

    Matrix sums = Matrix::Zero(k, features.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(r.assignments[i]) += features.row(i);
      ++counts[r.assignments[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        r.centroids.row(c) = sums.row(c) / counts[c];
        continue;
      }
      Index far = 0;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        const double d = (features.row(i) - r.centroids.row(r.assignments[i])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      r.centroids.row(c) = features.row(far);
    }
  }
  return r;
}

}  // namespace pprompt
