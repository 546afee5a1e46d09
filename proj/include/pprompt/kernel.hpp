#pragma once

#include <algorithm>
#include <vector>

#include "pprompt/core.hpp"

namespace pprompt {

// RBF kernel evaluated on every particle pair.
struct KernelMatrices {
  Matrix K;
  // grad_K[i].row(j) = ∇_{θ^j} K(θ^i, θ^j)
  std::vector<Matrix> grad_K;
};

/// K(a, b) = exp(−‖a − b‖²/bandwidth) over the rows of `particles`.
inline KernelMatrices rbf_kernel(const Matrix& particles, double bandwidth) {
  detail::require(std::isfinite(bandwidth) && bandwidth > 0.0, ErrorCode::invalid_argument,
                  "kernel bandwidth must be positive");
  const Index M = particles.rows();
  KernelMatrices km;
  km.K.resize(M, M);
  km.grad_K.assign(M, Matrix::Zero(M, particles.cols()));
  for (Index i = 0; i < M; ++i) {
    km.K(i, i) = 1.0;
    for (Index j = 0; j < i; ++j) {
      const double k = std::exp(-(particles.row(i) - particles.row(j)).squaredNorm() / bandwidth);
      km.K(i, j) = k;
      km.K(j, i) = k;
    }
  }
  for (Index i = 0; i < M; ++i)
    for (Index j = 0; j < M; ++j)
      if (i != j)
        km.grad_K[i].row(j) = (2.0 / bandwidth) * km.K(i, j) * (particles.row(i) - particles.row(j));
  return km;
}

inline std::vector<double> pairwise_distances(const Matrix& particles) {
  std::vector<double> out;
  const Index M = particles.rows();
  out.reserve(static_cast<std::size_t>(M * (M - 1) / 2));
  for (Index i = 0; i < M; ++i)
    for (Index j = i + 1; j < M; ++j) out.push_back((particles.row(i) - particles.row(j)).norm());
  return out;
}

// Median over all i < j pairs; average of the two middle values for even counts.
inline double median_pairwise_distance(const Matrix& particles) {
  auto d = pairwise_distances(particles);
  if (d.empty()) return 0.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + mid, d.end());
  const double upper = d[mid];
  if (d.size() % 2 == 1) return upper;
  const double lower = *std::max_element(d.begin(), d.begin() + mid);
  return 0.5 * (lower + upper);
}

inline double min_pairwise_distance(const Matrix& particles) {
  const auto d = pairwise_distances(particles);
  if (d.empty()) return std::numeric_limits<double>::infinity();
  return *std::min_element(d.begin(), d.end());
}

/// med²/log(M + 1); falls back to 1.0 for a single or fully collapsed ensemble.
inline double median_bandwidth(const Matrix& particles) {
  const double med = median_pairwise_distance(particles);
  if (particles.rows() < 2 || med <= 0.0) return 1.0;
  return med * med / std::log(static_cast<double>(particles.rows()) + 1.0);
}

}  // namespace pprompt
