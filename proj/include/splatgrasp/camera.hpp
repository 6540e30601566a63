#pragma once

#include <optional>

#include "splatgrasp/geometry.hpp"

namespace splatgrasp {

/// Pinhole camera. Pixel centres sit at integer coordinates; camera frame is
/// x right, y down, z forward. `pose` maps camera coordinates to world.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
  RigidTransform pose;

  /// Throws a precondition error when intrinsics are inconsistent.
  void validate() const;

  Vec3 center() const { return pose.translation; }
  Vec3 world_to_camera(const Vec3& p) const { return pose.rotation.transpose() * (p - pose.translation); }
  Vec3 camera_to_world(const Vec3& p) const { return pose.apply(p); }

  /// (u, v, z) for points in front of the camera (z > 0), nullopt otherwise.
  std::optional<Vec3> project(const Vec3& world) const;
  /// World point at pixel (u, v) with z-depth `depth`.
  Vec3 backproject(double u, double v, double depth) const;
  /// Unit world-space ray direction through pixel (u, v).
  Vec3 ray_direction(double u, double v) const;
};

}  // namespace splatgrasp
