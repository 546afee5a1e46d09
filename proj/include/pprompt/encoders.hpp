#pragma once

#include <cstdint>
#include <random>

#include "pprompt/core.hpp"

namespace pprompt {

/// Fixed text encoder g(θ, y) = W · [θ; e_y].
///
/// W is p×2d and the class token e_y is appended after the context vector.
/// Every member is set at construction and only exposed through const
/// accessors, so an instance can be shared freely between threads.
class FrozenEncoders {
 public:
  FrozenEncoders(int context_dim, int feature_dim, int num_classes, std::uint64_t seed)
      : FrozenEncoders(context_dim, feature_dim, num_classes, seed, Matrix(), 0.0) {}

  /// Random encoders whose class embeddings are pulled toward `class_anchors`
  /// (C×p, one image-space direction per class), mimicking a pretrained model
  /// that already roughly aligns class tokens with image features.
  ///
  /// Each embedding is (1 − alignment)·e_random + alignment·e_fit, where e_fit
  /// is the least-squares solution of W_class · e = anchor_y/‖anchor_y‖.
  /// alignment = 0 gives purely random class embeddings.
  FrozenEncoders(int context_dim, int feature_dim, int num_classes, std::uint64_t seed,
                 const Matrix& class_anchors, double alignment)
      : seed_(seed) {
    detail::require(context_dim > 0 && feature_dim > 0 && num_classes > 0,
                    ErrorCode::invalid_argument, "encoder dimensions must be positive");
    detail::require(alignment >= 0.0 && alignment <= 1.0, ErrorCode::invalid_argument,
                    "encoder alignment must lie in [0, 1]");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(2.0 * context_dim));
    class_embeddings_.resize(num_classes, context_dim);
    text_map_.resize(feature_dim, 2 * context_dim);
    for (Index i = 0; i < text_map_.rows(); ++i)
      for (Index j = 0; j < text_map_.cols(); ++j) text_map_(i, j) = normal(rng);
    for (Index i = 0; i < class_embeddings_.rows(); ++i)
      for (Index j = 0; j < class_embeddings_.cols(); ++j) class_embeddings_(i, j) = normal(rng);

    if (alignment > 0.0) {
      detail::require_dim(class_anchors.rows(), num_classes, "class_anchors rows");
      detail::require_dim(class_anchors.cols(), feature_dim, "class_anchors columns");
      const Matrix class_block = text_map_.rightCols(context_dim);
      const auto solver = class_block.colPivHouseholderQr();
      for (Index y = 0; y < num_classes; ++y) {
        const double n = class_anchors.row(y).norm();
        detail::require(n > 0.0, ErrorCode::invalid_argument, "zero-norm class anchor");
        const Vector fit = solver.solve(Vector(class_anchors.row(y).transpose() / n));
        class_embeddings_.row(y) = (1.0 - alignment) * class_embeddings_.row(y) + alignment * fit.transpose();
      }
    }
    finish();
  }

  // Explicit weights, used by checkpoints and hand-checked tests.
  FrozenEncoders(Matrix text_map, Matrix class_embeddings, std::uint64_t seed = 0)
      : seed_(seed), class_embeddings_(std::move(class_embeddings)), text_map_(std::move(text_map)) {
    detail::require(class_embeddings_.rows() > 0 && class_embeddings_.cols() > 0,
                    ErrorCode::invalid_argument, "class_embeddings must be non-empty");
    detail::require_dim(text_map_.cols(), 2 * class_embeddings_.cols(), "text_map columns");
    detail::require(text_map_.rows() > 0, ErrorCode::invalid_argument, "text_map must be non-empty");
    detail::require(text_map_.allFinite() && class_embeddings_.allFinite(),
                    ErrorCode::non_finite, "encoder weights must be finite");
    finish();
  }

  Index context_dim() const { return class_embeddings_.cols(); }
  Index feature_dim() const { return text_map_.rows(); }
  int num_classes() const { return static_cast<int>(class_embeddings_.rows()); }
  std::uint64_t seed() const { return seed_; }

  const Matrix& text_map() const { return text_map_; }
  const Matrix& class_embeddings() const { return class_embeddings_; }

  /// ∂g/∂θ: the first d columns of W.
  const Matrix& context_jacobian() const { return context_block_; }

  /// W · [0; e_y] for every class, one column per class.
  const Matrix& class_offsets() const { return class_offsets_; }

  Vector text_feature(const Vector& theta, int y) const {
    check_inputs(theta, y);
    return context_block_ * theta + class_offsets_.col(y);
  }

  /// Text features of every class for one context, one column per class.
  Matrix text_features(const Vector& theta) const {
    detail::require_dim(theta.size(), context_dim(), "theta");
    Matrix t = class_offsets_;
    t.colwise() += context_block_ * theta;
    return t;
  }

  Matrix text_feature_grad(const Vector& theta, int y) const {
    check_inputs(theta, y);
    return context_block_;
  }

  bool operator==(const FrozenEncoders& o) const {
    return seed_ == o.seed_ && text_map_ == o.text_map_ &&
           class_embeddings_ == o.class_embeddings_;
  }

 private:
  void finish() {
    const Index d = context_dim();
    context_block_ = text_map_.leftCols(d);
    class_offsets_ = text_map_.rightCols(d) * class_embeddings_.transpose();
  }

  void check_inputs(const Vector& theta, int y) const {
    detail::require_dim(theta.size(), context_dim(), "theta");
    detail::require(y >= 0 && y < num_classes(), ErrorCode::invalid_argument,
                    "class index " + std::to_string(y) + " out of range");
  }

  std::uint64_t seed_;
  Matrix class_embeddings_;
  Matrix text_map_;
  Matrix context_block_;
  Matrix class_offsets_;
};

inline Vector text_feature(const FrozenEncoders& enc, const Vector& theta, int y) {
  return enc.text_feature(theta, y);
}

inline Matrix text_feature_grad(const FrozenEncoders& enc, const Vector& theta, int y) {
  return enc.text_feature_grad(theta, y);
}

// Affine prior-mean map φ(x) = A x + b from feature space to context space.
struct PriorNet {
  Matrix A;  // d×p
  Vector b;  // d

  static PriorNet zeros(Index context_dim, Index feature_dim) {
    return {Matrix::Zero(context_dim, feature_dim), Vector::Zero(context_dim)};
  }

  Index context_dim() const { return A.rows(); }
  Index feature_dim() const { return A.cols(); }

  bool operator==(const PriorNet& o) const {
    return A.rows() == o.A.rows() && A.cols() == o.A.cols() && A == o.A && b == o.b;
  }
};

inline Vector prior_mean(const PriorNet& net, const Vector& feature) {
  detail::require_dim(net.b.size(), net.A.rows(), "prior bias");
  detail::require_dim(feature.size(), net.A.cols(), "feature");
  return net.A * feature + net.b;
}

}  // namespace pprompt
