#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "splatgrasp/camera.hpp"
#include "splatgrasp/image.hpp"

namespace splatgrasp {

enum class ShapeKind { Sphere, Box, Cylinder, Mug, Plate };

std::string to_string(ShapeKind shape);
ShapeKind parse_shape(const std::string& name);

/// One analytic object. Shapes are built in their own frame (z up) and placed by `pose`.
///
///   sphere    dimensions = (radius, -, -)
///   box       dimensions = half extents
///   cylinder  dimensions = (radius, half height, -), axis z
///   plate     dimensions = (radius, half thickness, -), axis z
///   mug       dimensions = (body radius, body half height, handle radius); solid body on
///             axis z plus a half-torus handle on the +x side in the xz-plane with tube
///             radius handle_radius · kMugTubeRatio
struct ObjectSpec {
  ShapeKind shape = ShapeKind::Sphere;
  RigidTransform pose;
  Vec3 dimensions = Vec3(0.05, 0.0, 0.0);
  Vec3 color = Vec3(0.8, 0.4, 0.2);
  std::string label;
  /// One entry per part; empty means a single part named after the object. Mugs have
  /// two parts, body then handle.
  std::vector<std::string> part_labels;

  int part_count() const { return shape == ShapeKind::Mug ? 2 : 1; }
  std::string part_label(int part) const;
  /// Signed distance in world coordinates with the object moved by `motion`. `part`
  /// receives the closest part.
  double sdf(const Vec3& world, const RigidTransform& motion = {}, int* part = nullptr) const;
  /// Radius of a sphere about the object origin that encloses the shape.
  double bounding_radius() const;
  void validate() const;
};

inline constexpr double kMugTubeRatio = 0.25;

struct SensorNoise {
  double depth_sigma = 0.0;       ///< metres
  double pixel_sigma = 0.0;       ///< tracker noise, pixels
  double outlier_fraction = 0.0;  ///< tracker outliers
};

struct SyntheticSceneSpec {
  std::vector<ObjectSpec> objects;
  std::vector<Camera> cameras;
  SensorNoise noise;
  std::uint64_t seed = 0;

  /// Throws a precondition error on an empty object list, duplicate labels, bad
  /// dimensions, invalid cameras or interpenetrating objects.
  void validate() const;
};

enum class MotionKind { Static, Easy, Medium, Hard };
std::string to_string(MotionKind motion);
MotionKind parse_motion(const std::string& name);

/// World-space motion of one object since step 0, for steps 0..steps (inclusive).
///   Easy:   horizontal translation of 0.08-0.12 m, no rotation
///   Medium: 180° about the vertical axis through `pivot`
///   Hard:   0.06-0.10 m horizontal translation together with 90-135° about the vertical
/// Direction and magnitude are drawn from `seed`; the path is linear in the step.
std::vector<RigidTransform> make_motion(MotionKind kind, int steps, const Vec3& pivot, std::uint64_t seed);

/// Ray-traced images from one camera. Depth is z-depth, 0 where nothing is hit; ids are
/// -1 on background. Part ids index SyntheticDataset::parts.
struct SyntheticFrame {
  int camera = 0;
  int step = 0;
  ImageD color;       ///< H x W x 3
  ImageD depth;       ///< observed (noisy when depth_sigma > 0)
  ImageD true_depth;  ///< exact
  LabelImage object_ids;
  LabelImage part_ids;
};

struct PartInfo {
  int object = 0;
  int local = 0;  ///< part index within the object
  std::string label;
};

/// Global part ids of every object's parts, object-major.
std::vector<PartInfo> enumerate_parts(const SyntheticSceneSpec& spec);

/// Renders every object under the per-object `motion` (world delta since step 0).
SyntheticFrame render_synthetic(const SyntheticSceneSpec& spec, int camera, std::span<const RigidTransform> motion,
                                int step = 0);

struct GenerateOptions {
  int steps = 0;  ///< frames are rendered for steps 0..steps
  MotionKind motion = MotionKind::Static;
  int moving_object = 0;
};

struct SyntheticDataset {
  SyntheticSceneSpec spec;
  GenerateOptions options;
  std::vector<PartInfo> parts;
  std::vector<std::vector<RigidTransform>> motion;  ///< per object, per step
  std::vector<SyntheticFrame> frames;               ///< step-major, then camera

  int camera_count() const { return static_cast<int>(spec.cameras.size()); }
  int step_count() const { return options.steps + 1; }
  const SyntheticFrame& frame(int camera, int step) const;
  std::vector<RigidTransform> motion_at(int step) const;
};

/// Validates `spec`, builds the motion of `moving_object` and renders all frames.
/// Bit-reproducible for a given spec and options.
SyntheticDataset generate(const SyntheticSceneSpec& spec, const GenerateOptions& options = {});

/// Cameras on a circle of `radius` around `target`, `elevation` radians above the
/// horizontal, looking at the target with image +y pointing downward.
std::vector<Camera> ring_cameras(int count, const Vec3& target, double radius, double elevation, int width,
                                 int height, double focal, double azimuth0 = 0.0);

/// Named scenes: "reference" (box and sphere), "tabletop" (mug, box and sphere), "mug",
/// "box" (graspable slab), "sphere" (wider than the gripper opening), "plate" (plate
/// overhanging a pedestal) and "tracking" (box on its own). Cameras are `camera_count`
/// ring views.
SyntheticSceneSpec named_scene(const std::string& name, int camera_count = 6, int width = 80, int height = 60,
                               std::uint64_t seed = 0);

}  // namespace splatgrasp
