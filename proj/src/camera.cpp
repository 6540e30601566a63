#include "splatgrasp/camera.hpp"

#include <cmath>
#include <sstream>

namespace splatgrasp {

void Camera::validate() const {
  std::ostringstream err;
  if (!(fx > 0.0) || !(fy > 0.0)) err << "focal lengths must be positive; ";
  if (width <= 0 || height <= 0) err << "image size must be positive; ";
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) err << "principal point outside image; ";
  if (!pose.is_proper(1e-6)) err << "pose rotation is not proper; ";
  if (!err.str().empty()) throw_precondition("camera: " + err.str());
}

std::optional<Vec3> Camera::project(const Vec3& world) const {
  const Vec3 c = world_to_camera(world);
  if (!(c.z() > 0.0)) return std::nullopt;
  return Vec3(fx * c.x() / c.z() + cx, fy * c.y() / c.z() + cy, c.z());
}

Vec3 Camera::backproject(double u, double v, double depth) const {
  const Vec3 c((u - cx) * depth / fx, (v - cy) * depth / fy, depth);
  return pose.apply(c);
}

Vec3 Camera::ray_direction(double u, double v) const {
  return pose.rotation * Vec3((u - cx) / fx, (v - cy) / fy, 1.0).normalized();
}

}  // namespace splatgrasp
