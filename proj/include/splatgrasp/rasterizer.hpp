#pragma once

#include <optional>
#include <span>

#include "splatgrasp/scene.hpp"

namespace splatgrasp {

inline constexpr double kNearPlane = 0.01;         ///< metres
inline constexpr double kCovarianceFloor = 0.3;    ///< px², added to both screen-space eigenvalues
inline constexpr double kMaxAlpha = 0.99;
inline constexpr double kMinTransmittance = 1e-4;  ///< compositing stops once T drops below this
/// Per-splat footprints extend to where opacity·gaussian falls below this value.
inline constexpr double kAlphaCutoff = 1e-9;
inline constexpr int kTileSize = 16;

/// Screen-space footprint of one primitive.
struct Splat2D {
  Vec2 mean = Vec2::Zero();      ///< pixels
  Mat2 cov = Mat2::Identity();   ///< pixels², floor included
  double view_depth = 0.0;       ///< camera-frame z of the centre
  double effective_radius = 0.0; ///< pixels
};

/// EWA projection. Returns nullopt when the centre is within the near plane or the
/// footprint misses the image entirely.
std::optional<Splat2D> project_gaussian(const Camera& camera, const GaussianPrimitive& primitive);

enum Channel : unsigned {
  kChannelDepth = 1u << 0,
  kChannelColor = 1u << 1,
  kChannelFeature = 1u << 2,
  kChannelNormal = 1u << 3,
};
using ChannelSet = unsigned;
inline constexpr ChannelSet kDefaultChannels = kChannelDepth | kChannelColor | kChannelFeature;

/// Alpha-composited buffers. Buffers for channels that were not requested are empty.
struct RenderedBuffers {
  int width = 0;
  int height = 0;
  ImageD depth;    ///< H x W
  ImageD color;    ///< H x W x 3
  ImageD feature;  ///< H x W x 16 (raw latents)
  ImageD normal;   ///< H x W x 3, camera frame, unit where alpha > 0
  ImageD alpha;    ///< 1 - final transmittance
  LabelImage contrib_count;
};

/// Front-to-back compositing of every requested channel. Primitives are ordered by view
/// depth with the lower index first on ties.
RenderedBuffers render(const Scene& scene, const Camera& camera, ChannelSet channels = kDefaultChannels);

/// Pixels where the selected subset's composited weight (occluded by the full scene) exceeds 0.5.
Mask render_mask(const Scene& scene, std::span<const Index> indices, const Camera& camera);

/// Composited primitive normals in the camera frame; zero where nothing is rendered.
ImageD render_normals(const Scene& scene, const Camera& camera);

}  // namespace splatgrasp
