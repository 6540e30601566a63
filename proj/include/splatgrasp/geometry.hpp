#pragma once

#include <Eigen/Geometry>

#include "splatgrasp/common.hpp"

namespace splatgrasp {

/// Quaternion stored as (w, x, y, z).
using Quat = Vec4;

/// Element of SE(3): x -> R x + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Mat4& m);
  static RigidTransform translation_only(const Vec3& t) { return {Mat3::Identity(), t}; }
  static RigidTransform rotation_about(const Vec3& axis, double angle, const Vec3& t = Vec3::Zero());

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_direction(const Vec3& d) const { return rotation * d; }

  RigidTransform inverse() const;
  /// (a * b)(x) = a(b(x)).
  RigidTransform operator*(const RigidTransform& other) const;
  Mat4 matrix() const;

  /// RᵀR = I and det R = +1 within `tol`.
  bool is_proper(double tol = 1e-9) const;
};

/// Rotation angle (radians) of R_a R_bᵀ.
double rotation_angle_between(const Mat3& a, const Mat3& b);

Quat normalized_quat(const Quat& q);
/// Rotation matrix of q / |q|.
Mat3 quat_to_rotation(const Quat& q);
/// Max-trace (Shepperd) branch; result has w >= 0.
Quat rotation_to_quat(const Mat3& r);
/// Hamilton product a ⊗ b, the rotation "b then a".
Quat quat_multiply(const Quat& a, const Quat& b);

/// Nearest proper rotation via SVD.
Mat3 orthonormalize(const Mat3& r);

/// Camera-style look-at: +z points from `eye` to `target`, +y roughly along `down`.
Mat3 look_at_rotation(const Vec3& eye, const Vec3& target, const Vec3& down);

}  // namespace splatgrasp
