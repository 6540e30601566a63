#pragma once

#include <cstdint>
#include <utility>

#include <Eigen/Core>

#include "splatgrasp/common.hpp"

namespace splatgrasp {

inline constexpr int kLatentDim = 16;
inline constexpr int kDecoderHidden = 64;
inline constexpr int kEmbeddingDim = 768;

using Latent = Eigen::Matrix<double, kLatentDim, 1>;

enum class Activation { Tanh, Identity };

/// Shallow two-branch MLP: latent(16) -> hidden(64) -> {object, part}(C).
struct DecoderWeights {
  Eigen::MatrixXd trunk_w;  ///< hidden x 16
  Eigen::VectorXd trunk_b;  ///< hidden
  Eigen::MatrixXd obj_w;    ///< C x hidden
  Eigen::VectorXd obj_b;    ///< C
  Eigen::MatrixXd part_w;   ///< C x hidden
  Eigen::VectorXd part_b;   ///< C
  Activation activation = Activation::Tanh;

  int output_dim() const { return static_cast<int>(obj_b.size()); }
  int hidden_dim() const { return static_cast<int>(trunk_b.size()); }
  /// Total number of scalar weights (trunk, object branch, part branch).
  Index parameter_count() const;

  static DecoderWeights zeros(int output_dim = kEmbeddingDim, int hidden = kDecoderHidden);
  /// Glorot-uniform weights, zero biases; deterministic per seed.
  static DecoderWeights random(int output_dim = kEmbeddingDim, std::uint64_t seed = 0,
                               int hidden = kDecoderHidden);

  /// Throws when shapes disagree or any weight is non-finite.
  void validate() const;
};

/// Column-batched decode: `latents` is 16 x N; outputs are C x N.
struct DecodedBatch {
  Eigen::MatrixXd hidden_pre;  ///< pre-activation trunk output (kept for backprop)
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd obj;
  Eigen::MatrixXd part;
};

DecodedBatch decode(const Eigen::MatrixXd& latents, const DecoderWeights& weights);

/// Single-latent decode.
std::pair<Eigen::VectorXd, Eigen::VectorXd> decode(const Latent& latent, const DecoderWeights& weights);

}  // namespace splatgrasp
