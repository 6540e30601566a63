#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "splatgrasp/feature_field.hpp"
#include "splatgrasp/rasterizer.hpp"

namespace splatgrasp {

struct LossWeights {
  double color = 1.0;
  double depth = 1.0;  ///< metres²
  double feature = 1.0;
  double part_lambda = 2.0;
};

struct LossReport {
  double color_l2 = 0.0;
  double depth_l2 = 0.0;
  double feat_obj_cosine = 0.0;
  double feat_part_cosine = 0.0;
  double total = 0.0;
};

/// One posed training view. Depth is invalid where 0 or NaN; feature maps may be empty
/// (no feature supervision) and must otherwise match the image size.
struct Frame {
  Camera camera;
  ImageD color;
  ImageD depth;
  FeatureMap f_obj;
  FeatureMap f_part;
  Mask loss_mask;  ///< empty = every pixel
};

/// Colour and depth: mean squared error over valid pixels. Features: mean (1 - cosine)
/// between decoded rendered latents and assigned targets. Throws when no pixel is valid.
/// `feature_pixels` restricts the feature terms to the listed pixel ids (y * width + x);
/// empty means every assigned pixel.
LossReport compute_losses(const RenderedBuffers& rendered, const Frame& target, const DecoderWeights& decoder,
                          const LossWeights& weights = {}, std::span<const std::size_t> feature_pixels = {});

/// Gradients of the total loss with respect to the optimised parametrisation: world
/// centres, raw quaternions (tangent to the unit sphere), log scales, opacity logits,
/// colours, latents and decoder weights.
struct SceneGradients {
  Eigen::MatrixXd center;         ///< N x 3
  Eigen::MatrixXd rotation;       ///< N x 4
  Eigen::MatrixXd log_scale;      ///< N x 3
  Eigen::VectorXd opacity_logit;  ///< N
  Eigen::MatrixXd color;          ///< N x 3
  Eigen::MatrixXd latent;         ///< N x 16
  DecoderWeights decoder;         ///< same shapes as the scene decoder

  static SceneGradients zeros(const Scene& scene);
};

struct GradientResult {
  LossReport loss;
  SceneGradients grad;
};

/// Analytic reverse pass through rendering and losses (same `feature_pixels` rule).
GradientResult gradients(const Scene& scene, const Frame& frame, const LossWeights& weights = {},
                         std::span<const std::size_t> feature_pixels = {});

/// Opacity clamp of the logistic parametrisation.
inline constexpr double kMinOpacity = 1e-4;
inline constexpr double kMaxOpacity = 1.0 - 1e-4;
double opacity_to_logit(double opacity);
double logit_to_opacity(double logit);

struct LearningRates {
  double center = 1.6e-4;  ///< multiplied by the scene extent
  double color = 2.5e-3;
  double opacity = 5e-2;
  double scale = 5e-3;
  double rotation = 1e-3;
  double latent = 2.5e-3;
  double decoder = 2.5e-3;
};

/// Which parameter groups are updated.
struct ParameterGroups {
  bool center = true;
  bool rotation = true;
  bool scale = true;
  bool opacity = true;
  bool color = true;
  bool latent = true;
  bool decoder = true;
};

struct FitConfig {
  int iterations = 3000;
  LearningRates lr;
  ParameterGroups groups;
  LossWeights weights;
  /// Feature-loss pixels sampled per iteration; 0 uses every assigned pixel.
  int feature_samples = 512;
  /// Scene extent for the centre learning rate; 0 derives it from the initial centres.
  double scene_extent = 0.0;
  std::uint64_t seed = 0;
  /// Abort when the total exceeds `divergence_factor` x the initial total for this many
  /// consecutive iterations.
  int divergence_window = 100;
  double divergence_factor = 10.0;
  /// Called every `callback_every` iterations (0 disables) with the iteration count done.
  int callback_every = 0;
  std::function<void(int)> callback;

  void validate() const;
};

struct FitStats {
  std::vector<LossReport> trace;  ///< one entry per iteration (the frame used that iteration)
  LossReport initial;             ///< averaged over all frames before the first update
  LossReport final;               ///< averaged over all frames after the last update
  int iterations = 0;
};

/// First-order fitting; frames are visited round-robin, one per iteration.
FitStats fit(Scene& scene, const std::vector<Frame>& frames, const FitConfig& config = {});

/// Per-frame masks of the moved subset before and after a deformation.
struct PartialMasks {
  Mask before;
  Mask after;
};

inline constexpr int kPartialMaskDilation = 5;

/// Re-optimises only primitives whose centres project inside the dilated union of the
/// before/after masks of any frame; the loss is restricted to that union. The decoder
/// and every other primitive are left bit-identical. An empty union is a no-op with a warning.
FitStats partial_finetune(Scene& scene, const std::vector<Frame>& frames, const std::vector<PartialMasks>& masks,
                          const FitConfig& config);

/// Mean loss over `frames` using every assigned feature pixel.
LossReport evaluate(const Scene& scene, const std::vector<Frame>& frames, const LossWeights& weights = {});

double psnr(const ImageD& rendered, const ImageD& target);

}  // namespace splatgrasp
