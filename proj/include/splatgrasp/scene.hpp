#pragma once

#include <optional>
#include <span>
#include <vector>

#include "splatgrasp/camera.hpp"
#include "splatgrasp/decoder.hpp"
#include "splatgrasp/image.hpp"

namespace splatgrasp {

/// One explicit anisotropic Gaussian.
struct GaussianPrimitive {
  Vec3 center = Vec3::Zero();
  Quat rotation = Quat(1.0, 0.0, 0.0, 0.0);  ///< unit, (w, x, y, z)
  Vec3 scale = Vec3::Constant(0.01);          ///< per-axis standard deviations, metres
  double opacity = 0.5;
  Vec3 color = Vec3::Zero();  ///< RGB in [0, 1]
  Latent feature_latent = Latent::Zero();

  Mat3 rotation_matrix() const { return quat_to_rotation(rotation); }
  /// R diag(scale²) Rᵀ.
  Mat3 covariance() const;
  double max_scale() const { return scale.maxCoeff(); }
  /// Throws when the quaternion, scale or opacity invariants are broken.
  void validate() const;
};

/// Ground-truth provenance carried by synthetic scenes; -1 means unknown.
struct PrimitiveLabel {
  int object = -1;
  int part = -1;
};

struct Scene {
  std::vector<GaussianPrimitive> primitives;
  DecoderWeights decoder = DecoderWeights::zeros();
  std::vector<PrimitiveLabel> labels;  ///< empty, or one per primitive

  Index size() const { return primitives.size(); }
  bool has_labels() const { return !labels.empty() && labels.size() == primitives.size(); }
  /// Indices of primitives whose ground-truth object (or part, when `part` is set) matches.
  IndexSet indices_with_label(int object, std::optional<int> part = std::nullopt) const;
  void validate() const;
};

struct BackprojectOptions {
  int stride = 1;
  double initial_opacity = 0.5;
  /// Tangential extent as a fraction of the strided pixel footprint d·stride/fx.
  double footprint_fraction = 0.5;
  /// Orient each primitive as a flat disc in the local depth-map tangent plane.
  /// When false every primitive is isotropic.
  bool surface_aligned = true;
  /// Thickness of surface-aligned primitives relative to their tangential extent.
  double flatten_ratio = 0.1;
};

/// One primitive per valid strided pixel. Invalid depth is 0, negative or NaN.
/// Throws a precondition error when no pixel is valid.
std::vector<GaussianPrimitive> backproject_depth(const Camera& camera, const ImageD& depth,
                                                 const ImageD& color,
                                                 const BackprojectOptions& options = {});

/// Applies `transform` to the selected primitives (centres and orientations).
/// Validates every index before mutating anything.
void apply_transform(Scene& scene, std::span<const Index> indices, const RigidTransform& transform);

struct NormalEstimate {
  Vec3 normal = Vec3::UnitZ();
  bool degenerate = false;  ///< isotropic primitive; normal points at the viewer
};

inline constexpr double kIsotropyRatio = 1.05;

/// Smallest-scale axis, oriented toward `view_origin`.
NormalEstimate primitive_normal(const GaussianPrimitive& primitive, const Vec3& view_origin);

}  // namespace splatgrasp
