#pragma once

// Rasterizer internals shared by the forward renderer and the analytic backward pass.

#include <cstdint>
#include <optional>
#include <vector>

#include "splatgrasp/rasterizer.hpp"

namespace splatgrasp::detail {

using Mat23 = Eigen::Matrix<double, 2, 3>;

struct ProjectedPrimitive {
  Index index = 0;             ///< position in Scene::primitives
  Splat2D splat;
  Mat2 conic = Mat2::Identity();  ///< splat.cov⁻¹
  Vec3 cam_point = Vec3::Zero();
  Mat23 jacobian = Mat23::Zero();
  Mat3 world_cov = Mat3::Identity();
  double opacity = 0.0;
  /// Mahalanobis² beyond which opacity·exp(-q/2) is below kAlphaCutoff (with slack).
  double q_cut = 0.0;
};

std::optional<ProjectedPrimitive> project(const Camera& camera, const GaussianPrimitive& primitive, Index index);

struct RasterPlan {
  int width = 0;
  int height = 0;
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<ProjectedPrimitive> splats;
  /// Per tile, positions into `splats` sorted by (view depth, primitive index).
  std::vector<std::vector<std::uint32_t>> tiles;

  const std::vector<std::uint32_t>& tile_for_pixel(int x, int y) const {
    return tiles[static_cast<std::size_t>(y / kTileSize) * tiles_x + x / kTileSize];
  }
};

RasterPlan build_plan(const Scene& scene, const Camera& camera);

/// Clamped per-pixel opacity α' and whether the 0.99 clamp was active.
struct PixelAlpha {
  double alpha = 0.0;
  double gaussian = 0.0;
  Vec2 delta = Vec2::Zero();
  bool clamped = false;
};

inline PixelAlpha pixel_alpha(const ProjectedPrimitive& s, double px, double py) {
  PixelAlpha out;
  out.delta = Vec2(px - s.splat.mean.x(), py - s.splat.mean.y());
  const double q = out.delta.dot(s.conic * out.delta);
  if (q > s.q_cut) return out;
  out.gaussian = std::exp(-0.5 * q);
  const double raw = s.opacity * out.gaussian;
  out.clamped = raw > kMaxAlpha;
  out.alpha = out.clamped ? kMaxAlpha : raw;
  return out;
}

/// Forward compositing of `channels` attributes per splat (attrs[splat * channels + c]).
struct CompositeState {
  std::vector<double> output;          ///< pixel * channels
  std::vector<double> final_transmittance;
  std::vector<std::uint32_t> processed;  ///< list entries consumed per pixel
  std::vector<std::int32_t> contributors;
};

CompositeState composite(const RasterPlan& plan, const std::vector<double>& attrs, int channels);

/// Per-splat gradients of a scalar loss with respect to compositing inputs.
struct SplatGradients {
  std::vector<double> attrs;  ///< splat * channels
  std::vector<Vec2> mean;
  std::vector<Mat2> conic;    ///< symmetric dL/dA
  std::vector<double> opacity;
};

SplatGradients composite_backward(const RasterPlan& plan, const std::vector<double>& attrs, int channels,
                                  const CompositeState& forward, const std::vector<double>& grad_output);

}  // namespace splatgrasp::detail
