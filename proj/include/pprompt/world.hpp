#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pprompt/core.hpp"

namespace pprompt {

// Parameters of the multi-modal Gaussian mixture that stands in for frozen
// image features.
struct WorldSpec {
  std::uint64_t seed = 0;
  int feature_dim = 32;
  int num_classes = 5;
  int modes_per_class = 2;
  double mode_spread = 1.0;
  double noise_std = 0.3;
  int shots_per_class = 4;
  int test_per_class = 20;

  void validate() const {
    using detail::require;
    const auto bad = ErrorCode::invalid_argument;
    require(feature_dim > 0, bad, "world.feature_dim must be positive");
    require(num_classes > 0, bad, "world.num_classes must be positive");
    require(modes_per_class > 0, bad, "world.modes_per_class must be positive");
    require(shots_per_class > 0, bad, "world.shots_per_class must be positive");
    require(test_per_class > 0, bad, "world.test_per_class must be positive");
    require(std::isfinite(mode_spread) && mode_spread > 0.0, bad,
            "world.mode_spread must be positive");
    // noise_std = 0 is allowed: every feature then sits on its mode center.
    require(std::isfinite(noise_std) && noise_std >= 0.0, bad,
            "world.noise_std must be non-negative");
  }

  bool operator==(const WorldSpec&) const = default;
};

// One split of labeled features. Row i of `features` is f(x_i).
struct LabeledSplit {
  Matrix features;
  std::vector<int> labels;
  // Index of the planted mixture component each row was drawn from. Kept for
  // diagnostics; never consulted by inference code.
  std::vector<int> modes;

  Index size() const { return features.rows(); }

  bool operator==(const LabeledSplit& o) const {
    return features.rows() == o.features.rows() &&
           features.cols() == o.features.cols() && features == o.features &&
           labels == o.labels && modes == o.modes;
  }
};

struct FewShotTask {
  WorldSpec spec;
  int num_classes = 0;
  LabeledSplit train;
  LabeledSplit test;

  Index feature_dim() const { return train.features.cols(); }

  bool operator==(const FewShotTask&) const = default;

  // Throws Error(schema) naming the first violated invariant.
  void validate() const {
    using detail::require;
    const auto bad = ErrorCode::schema;
    require(num_classes > 0, bad, "num_classes must be positive");
    auto check_split = [&](const LabeledSplit& s, const std::string& name) {
      require(static_cast<Index>(s.labels.size()) == s.features.rows(), bad,
              name + ".labels: length does not match number of feature rows");
      require(s.modes.empty() ||
                  static_cast<Index>(s.modes.size()) == s.features.rows(),
              bad, name + ".modes: length does not match number of feature rows");
      for (std::size_t i = 0; i < s.labels.size(); ++i) {
        require(s.labels[i] >= 0 && s.labels[i] < num_classes, bad,
                name + ".labels[" + std::to_string(i) + "]: label " +
                    std::to_string(s.labels[i]) + " outside [0, " +
                    std::to_string(num_classes) + ")");
      }
      for (Index i = 0; i < s.features.rows(); ++i) {
        require(s.features.row(i).allFinite(), bad,
                name + ".features[" + std::to_string(i) +
                    "]: non-finite entry");
      }
    };
    check_split(train, "train");
    check_split(test, "test");
    require(train.features.cols() == test.features.cols() ||
                test.features.rows() == 0,
            bad, "test.features: column count differs from train.features");
  }
};

namespace detail {

inline LabeledSplit draw_split(std::mt19937_64& rng,
                               const std::vector<Matrix>& centers,
                               int per_class, double noise_std) {
  const int num_classes = static_cast<int>(centers.size());
  const Index p = centers.front().cols();
  const int modes = static_cast<int>(centers.front().rows());
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, modes - 1);

  LabeledSplit split;
  split.features.resize(static_cast<Index>(num_classes) * per_class, p);
  split.labels.reserve(split.features.rows());
  split.modes.reserve(split.features.rows());
  Index row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int s = 0; s < per_class; ++s, ++row) {
      const int m = pick(rng);
      for (Index j = 0; j < p; ++j) {
        split.features(row, j) = centers[c](m, j) + noise_std * noise(rng);
      }
      split.labels.push_back(c);
      split.modes.push_back(m);
    }
  }
  return split;
}

}  // namespace detail

namespace detail {

// Mode centers are the first draws of the world stream.
inline std::vector<Matrix> draw_mode_centers(const WorldSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Matrix> centers(spec.num_classes, Matrix(spec.modes_per_class, spec.feature_dim));
  for (auto& c : centers) {
    for (Index m = 0; m < c.rows(); ++m)
      for (Index j = 0; j < c.cols(); ++j) c(m, j) = spec.mode_spread * normal(rng);
  }
  return centers;
}

}  // namespace detail

/// Draws a few-shot task from the planted mixture described by `spec`.
///
/// Mode centers come from N(0, I) scaled by `mode_spread`, one set per class.
/// Train and test rows are independent draws from the same stream, so the
/// whole task is a pure function of `spec`.
inline FewShotTask generate_task(const WorldSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto centers = detail::draw_mode_centers(spec, rng);

  FewShotTask task;
  task.spec = spec;
  task.num_classes = spec.num_classes;
  task.train = detail::draw_split(rng, centers, spec.shots_per_class, spec.noise_std);
  task.test = detail::draw_split(rng, centers, spec.test_per_class, spec.noise_std);
  return task;
}

/// Mean of each class's planted mode centers, one row per class.
inline Matrix class_prototypes(const WorldSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto centers = detail::draw_mode_centers(spec, rng);
  Matrix protos(spec.num_classes, spec.feature_dim);
  for (int c = 0; c < spec.num_classes; ++c) protos.row(c) = centers[c].colwise().mean();
  return protos;
}

}  // namespace pprompt
