#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pprompt/core.hpp"
#include "pprompt/energy.hpp"
#include "pprompt/kernel.hpp"

namespace pprompt {

enum class Method { sgd, sgld, svgd };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::sgd: return "SGD";
    case Method::sgld: return "SGLD";
    case Method::svgd: return "SVGD";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "SGD" || s == "sgd") return Method::sgd;
  if (s == "SGLD" || s == "sgld") return Method::sgld;
  if (s == "SVGD" || s == "svgd") return Method::svgd;
  throw Error(ErrorCode::invalid_argument, "unknown sampler method '" + s + "'");
}

struct Bandwidth {
  enum class Mode { median_heuristic, fixed } mode = Mode::median_heuristic;
  double value = 1.0;  // used when mode == fixed
};

struct SamplerConfig {
  Method method = Method::svgd;
  double step_size = 0.01;
  int steps = 500;
  int num_particles = 4;
  Bandwidth bandwidth;
  std::uint64_t seed = 0;

  void validate() const {
    const auto bad = ErrorCode::invalid_argument;
    detail::require(std::isfinite(step_size) && step_size > 0.0, bad,
                    "sampler.step_size must be positive");
    detail::require(steps >= 1, bad, "sampler.steps must be >= 1");
    detail::require(num_particles >= 1, bad, "sampler.num_particles must be >= 1");
    if (bandwidth.mode == Bandwidth::Mode::fixed)
      detail::require(std::isfinite(bandwidth.value) && bandwidth.value > 0.0, bad,
                      "sampler.bandwidth must be positive");
  }
};

// Variance of each entry at initialization.
inline constexpr double kContextInitVariance = 0.02;

struct ContextEnsemble {
  Matrix particles;  // M×d, row i is θ^i
  std::uint64_t step_count = 0;

  Index size() const { return particles.rows(); }
  Index dim() const { return particles.cols(); }

  /// Entries drawn i.i.d. from N(0, 0.02).
  static ContextEnsemble initialize(Index num_particles, Index context_dim, std::uint64_t seed) {
    detail::require(num_particles >= 1 && context_dim >= 1, ErrorCode::invalid_argument,
                    "ensemble dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(kContextInitVariance));
    ContextEnsemble e;
    e.particles.resize(num_particles, context_dim);
    for (Index i = 0; i < num_particles; ++i)
      for (Index j = 0; j < context_dim; ++j) e.particles(i, j) = normal(rng);
    return e;
  }

  bool operator==(const ContextEnsemble& o) const {
    return step_count == o.step_count && particles.rows() == o.particles.rows() &&
           particles.cols() == o.particles.cols() && particles == o.particles;
  }
};

namespace detail {

inline void check_update(const Matrix& next, const char* method) {
  for (Index i = 0; i < next.rows(); ++i) {
    if (!next.row(i).allFinite())
      throw Error(ErrorCode::non_finite, std::string(method) + ": non-finite update for particle " +
                                             std::to_string(i));
  }
}

inline void check_step_inputs(const ContextEnsemble& ensemble, const Matrix& grads) {
  require_dim(grads.rows(), ensemble.size(), "gradient rows");
  require_dim(grads.cols(), ensemble.dim(), "gradient columns");
  require(ensemble.size() >= 1, ErrorCode::invalid_argument, "empty ensemble");
  for (Index i = 0; i < grads.rows(); ++i)
    require(grads.row(i).allFinite(), ErrorCode::non_finite,
            "non-finite energy gradient for particle " + std::to_string(i));
}

}  // namespace detail

/// θ^i ← θ^i − (h/M) Σ_j [K(θ^i,θ^j) ∇V(θ^j) − ∇_{θ^j} K(θ^i,θ^j)]
///
/// Every particle moves from the same pre-step snapshot.
inline ContextEnsemble svgd_step(const ContextEnsemble& ensemble, const Matrix& grads,
                                 const KernelMatrices& kern, double step_size) {
  detail::check_step_inputs(ensemble, grads);
  const Index M = ensemble.size();
  detail::require_dim(kern.K.rows(), M, "kernel matrix");
  ContextEnsemble next{ensemble.particles, ensemble.step_count + 1};
  const double scale = step_size / static_cast<double>(M);
  for (Index i = 0; i < M; ++i) {
    Eigen::RowVectorXd drive = Eigen::RowVectorXd::Zero(ensemble.dim());
    for (Index j = 0; j < M; ++j) drive += kern.K(i, j) * grads.row(j) - kern.grad_K[i].row(j);
    next.particles.row(i) -= scale * drive;
  }
  detail::check_update(next.particles, "svgd_step");
  return next;
}

/// θ ← θ − h ∇V(θ) independently per particle.
inline ContextEnsemble gradient_step(const ContextEnsemble& ensemble, const Matrix& grads,
                                     double step_size) {
  detail::check_step_inputs(ensemble, grads);
  ContextEnsemble next{ensemble.particles, ensemble.step_count + 1};
  for (Index i = 0; i < next.size(); ++i) next.particles.row(i) -= step_size * grads.row(i);
  detail::check_update(next.particles, "gradient_step");
  return next;
}

/// θ ← θ − h ∇V(θ) + √(2h) ε with ε ~ N(0, I) drawn row by row from `rng`.
template <class Rng>
ContextEnsemble sgld_step(const ContextEnsemble& ensemble, const Matrix& grads, double step_size,
                          Rng& rng) {
  detail::check_step_inputs(ensemble, grads);
  detail::require(step_size > 0.0, ErrorCode::invalid_argument, "step size must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise_scale = std::sqrt(2.0 * step_size);
  ContextEnsemble next{ensemble.particles, ensemble.step_count + 1};
  for (Index i = 0; i < next.size(); ++i)
    for (Index j = 0; j < next.dim(); ++j)
      next.particles(i, j) += -step_size * grads(i, j) + noise_scale * normal(rng);
  detail::check_update(next.particles, "sgld_step");
  return next;
}

struct TracePoint {
  int step;
  double mean_energy;
  double min_pairwise_distance;
  double bandwidth;  // 0 for methods without a kernel
};

struct SamplerResult {
  ContextEnsemble ensemble;
  std::vector<TracePoint> trace;
};

/// Runs `scfg.steps` updates of the configured method against any callable
/// θ ↦ {value, grad}. The trace has one row per visited state, the initial
/// state included.
template <class EnergyFn>
SamplerResult run_sampler(const SamplerConfig& scfg, ContextEnsemble ensemble,
                          const EnergyFn& energy_fn) {
  scfg.validate();
  detail::require(ensemble.size() >= 1, ErrorCode::invalid_argument, "empty ensemble");
  std::mt19937_64 noise_rng(scfg.seed);
  const Index M = ensemble.size();

  SamplerResult out;
  out.trace.reserve(static_cast<std::size_t>(scfg.steps) + 1);
  Matrix grads(M, ensemble.dim());
  for (int step = 0;; ++step) {
    double total = 0.0;
    for (Index i = 0; i < M; ++i) {
      const auto report = energy_fn(Vector(ensemble.particles.row(i).transpose()));
      if (!std::isfinite(report.value) || !report.grad.allFinite())
        throw Error(ErrorCode::non_finite, "non-finite energy at step " + std::to_string(step) +
                                               ", particle " + std::to_string(i));
      total += report.value;
      grads.row(i) = report.grad.transpose();
    }
    double bandwidth = 0.0;
    if (scfg.method == Method::svgd) {
      bandwidth = scfg.bandwidth.mode == Bandwidth::Mode::fixed
                      ? scfg.bandwidth.value
                      : median_bandwidth(ensemble.particles);
    }
    out.trace.push_back({step, total / static_cast<double>(M),
                         min_pairwise_distance(ensemble.particles), bandwidth});
    if (step == scfg.steps) break;

    switch (scfg.method) {
      case Method::sgd:
        ensemble = gradient_step(ensemble, grads, scfg.step_size);
        break;
      case Method::sgld:
        ensemble = sgld_step(ensemble, grads, scfg.step_size, noise_rng);
        break;
      case Method::svgd:
        ensemble = svgd_step(ensemble, grads, rbf_kernel(ensemble.particles, bandwidth),
                             scfg.step_size);
        break;
    }
  }
  out.ensemble = std::move(ensemble);
  return out;
}

inline SamplerResult run_sampler(const FrozenEncoders& enc, const LikelihoodConfig& cfg,
                                 const PriorConfig& pcfg, const SamplerConfig& scfg,
                                 ContextEnsemble ensemble, const FewShotTask& task,
                                 const Vector& prior_mean_bar) {
  detail::require_dim(ensemble.dim(), enc.context_dim(), "ensemble context dimension");
  return run_sampler(scfg, std::move(ensemble),
                     PosteriorEnergy(enc, cfg, pcfg, task, prior_mean_bar));
}

}  // namespace pprompt
