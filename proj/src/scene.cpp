#include "splatgrasp/scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace splatgrasp {

Mat3 GaussianPrimitive::covariance() const {
  const Mat3 r = rotation_matrix();
  return r * scale.cwiseProduct(scale).asDiagonal() * r.transpose();
}

void GaussianPrimitive::validate() const {
  if (std::abs(rotation.norm() - 1.0) > 1e-9) throw_precondition("primitive: quaternion not unit");
  if (!(scale.array() > 0.0).all() || !scale.allFinite()) throw_precondition("primitive: scale must be positive");
  if (!(opacity >= 0.0 && opacity <= 1.0)) throw_precondition("primitive: opacity outside [0, 1]");
  if (!center.allFinite() || !color.allFinite() || !feature_latent.allFinite())
    throw_precondition("primitive: non-finite attribute");
}

IndexSet Scene::indices_with_label(int object, std::optional<int> part) const {
  IndexSet out;
  if (!has_labels()) return out;
  for (Index i = 0; i < labels.size(); ++i) {
    if (part ? labels[i].part == *part : labels[i].object == object) out.push_back(i);
  }
  return out;
}

void Scene::validate() const {
  for (const auto& p : primitives) p.validate();
  if (!labels.empty() && labels.size() != primitives.size())
    throw_precondition("scene: label count does not match primitive count");
  decoder.validate();
}

namespace {

bool valid_depth(double d) { return std::isfinite(d) && d > 0.0; }

// Camera-frame point at pixel (u, v), if the depth there is valid.
std::optional<Vec3> camera_point(const Camera& cam, const ImageD& depth, int u, int v) {
  if (!depth.contains(u, v)) return std::nullopt;
  const double d = depth(u, v);
  if (!valid_depth(d)) return std::nullopt;
  return Vec3((u - cam.cx) * d / cam.fx, (v - cam.cy) * d / cam.fy, d);
}

// Tangent step along one image axis; prefers the side with the smaller jump so that
// depth discontinuities are not bridged.
std::optional<Vec3> tangent_step(const Camera& cam, const ImageD& depth, int u, int v, int du, int dv,
                                 const Vec3& here) {
  const auto fwd = camera_point(cam, depth, u + du, v + dv);
  const auto bwd = camera_point(cam, depth, u - du, v - dv);
  // A pixel step on a smooth surface changes depth by at most a few percent unless the
  // surface is near grazing; larger jumps are treated as occlusion boundaries.
  const double limit = 0.05 * here.z();
  std::optional<Vec3> best;
  if (fwd && std::abs(fwd->z() - here.z()) < limit) best = *fwd - here;
  if (bwd && std::abs(bwd->z() - here.z()) < limit) {
    const Vec3 step = here - *bwd;
    if (!best || step.norm() < best->norm()) best = step;
  }
  return best;
}

}  // namespace

std::vector<GaussianPrimitive> backproject_depth(const Camera& camera, const ImageD& depth,
                                                 const ImageD& color, const BackprojectOptions& options) {
  camera.validate();
  if (options.stride <= 0) throw_precondition("backproject_depth: stride must be positive");
  if (depth.width() != camera.width || depth.height() != camera.height)
    throw_precondition("backproject_depth: depth map size differs from camera");
  if (!color.same_size(depth) || color.channels() != 3)
    throw_precondition("backproject_depth: color must be an RGB image of the depth map's size");

  const Mat3& rot = camera.pose.rotation;
  std::vector<GaussianPrimitive> out;
  for (int v = 0; v < depth.height(); v += options.stride) {
    for (int u = 0; u < depth.width(); u += options.stride) {
      const auto here = camera_point(camera, depth, u, v);
      if (!here) continue;
      GaussianPrimitive p;
      p.center = camera.pose.apply(*here);
      p.opacity = options.initial_opacity;
      p.color = Vec3(color(u, v, 0), color(u, v, 1), color(u, v, 2)).cwiseMax(0.0).cwiseMin(1.0);
      const double footprint = options.footprint_fraction * options.stride * here->z() / camera.fx;
      p.scale = Vec3::Constant(footprint);

      if (options.surface_aligned) {
        const auto tu = tangent_step(camera, depth, u, v, 1, 0, *here);
        const auto tv = tangent_step(camera, depth, u, v, 0, 1, *here);
        if (tu && tv) {
          Vec3 n = tu->cross(*tv);
          if (n.norm() > 1e-12) {
            n.normalize();
            if (n.dot(-*here) < 0.0) n = -n;
            const Vec3 a1 = (*tu - n * n.dot(*tu)).normalized();
            const Vec3 a2 = n.cross(a1);
            Mat3 frame;
            frame.col(0) = a1;
            frame.col(1) = a2;
            frame.col(2) = n;
            // Stretch along the foreshortened directions, bounded to avoid grazing blow-ups.
            const double step = options.footprint_fraction * options.stride;
            const double s1 = std::clamp(step * std::abs(a1.dot(*tu)), footprint, 4.0 * footprint);
            const double s2 = std::clamp(step * std::abs(a2.dot(*tv)), footprint, 4.0 * footprint);
            p.scale = Vec3(s1, s2, options.flatten_ratio * std::min(s1, s2));
            p.rotation = rotation_to_quat(rot * frame);
          }
        }
      }
      out.push_back(p);
    }
  }
  if (out.empty()) throw_precondition("backproject_depth: depth map has no valid pixel (empty init)");
  return out;
}

void apply_transform(Scene& scene, std::span<const Index> indices, const RigidTransform& transform) {
  for (Index i : indices) {
    if (i >= scene.primitives.size()) {
      std::ostringstream msg;
      msg << "apply_transform: index " << i << " out of range (" << scene.primitives.size() << ")";
      throw_precondition(msg.str());
    }
  }
  const bool rotates = transform.rotation != Mat3::Identity();
  const Quat q = rotation_to_quat(transform.rotation);
  for (Index i : indices) {
    auto& p = scene.primitives[i];
    p.center = transform.apply(p.center);
    if (rotates) p.rotation = normalized_quat(quat_multiply(q, p.rotation));
  }
}

NormalEstimate primitive_normal(const GaussianPrimitive& primitive, const Vec3& view_origin) {
  const Vec3& s = primitive.scale;
  const Vec3 to_view = view_origin - primitive.center;
  NormalEstimate out;
  if (s.maxCoeff() / s.minCoeff() < kIsotropyRatio) {
    out.degenerate = true;
    const double n = to_view.norm();
    out.normal = n > 0.0 ? Vec3(to_view / n) : Vec3::UnitZ();
    return out;
  }
  Eigen::Index axis = 0;
  s.minCoeff(&axis);
  Vec3 n = primitive.rotation_matrix().col(axis);
  if (n.dot(to_view) < 0.0) n = -n;
  out.normal = n.normalized();
  return out;
}

}  // namespace splatgrasp
