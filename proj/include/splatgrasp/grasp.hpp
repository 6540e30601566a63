#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "splatgrasp/scene.hpp"

namespace splatgrasp {

namespace detail {
class SpatialHash;
}

/// Two-finger parallel gripper. Gripper frame: origin at the centre of the palm's inner
/// face, +x from fingertips toward the palm (the approach direction is -x), y is the
/// closing axis, z the finger thickness axis.
///
///   fingers:  x in [-finger_length, 0], g/2 <= |y| <= max_open_width / 2, |z| <= finger_width / 2
///   palm:     x in [0, finger_width],   |y| <= max_open_width / 2,         |z| <= finger_width / 2
///   closing:  x in [-finger_length, 0], |y| < g/2,                         |z| <= finger_width / 2
///
/// with inner gap g = max_open_width - 2 finger_width.
struct GripperModel {
  double finger_length = 0.05;
  double finger_width = 0.02;
  double hand_depth = 0.05;  ///< sweep starts with the fingertips this far beyond the sample point
  double max_open_width = 0.08;
  double collision_radius = 0.04;

  double inner_gap() const { return max_open_width - 2.0 * finger_width; }
  void validate() const;
};

/// Axis-aligned box in the gripper frame.
struct GripperBox {
  Vec3 lo;
  Vec3 hi;
};

struct GripperGeometry {
  GripperBox fingers[2];
  GripperBox palm;
  GripperBox closing;
};
GripperGeometry gripper_geometry(const GripperModel& gripper);

struct GraspCandidate {
  RigidTransform pose;        ///< gripper frame at first contact
  double contact_offset = 0;  ///< x*: push distance from the sweep start, metres
  int enclosed_count = 0;     ///< N_obj
  double score = 0.0;
  double antipodality = 0.0;
  double collision_margin = 0.0;  ///< clearance of non-part geometry from the gripper, metres
  Index sample = 0;
  int y_index = 0;
  int phi_index = 0;

  Vec3 closing_axis() const { return pose.rotation.col(1); }
  Vec3 approach_axis() const { return -pose.rotation.col(0); }
};

/// F(p) = [v3 v2 v1] with v1 the normal direction, v3 the minimum direction and
/// v2 = v1 × v3. The hand frame at φ = 0 is [v1 v2 -v3]: it approaches along -v1 and
/// closes along v2.
struct LocalFrame {
  Vec3 origin = Vec3::Zero();
  Mat3 axes = Mat3::Identity();
  Vec3 eigenvalues = Vec3::Zero();  ///< along v1, v2, v3 (descending)
  Mat3 moment = Mat3::Zero();       ///< Σ n nᵀ over the neighbourhood
  int neighbors = 0;

  Vec3 normal() const { return axes.col(2); }
  Vec3 minimum() const { return axes.col(0); }
};

/// Union of balls around the part centres, each with radius max-scale + collision radius.
class Workspace {
 public:
  Workspace();
  Workspace(std::vector<Vec3> centers, std::vector<double> radii);
  Workspace(Workspace&&) noexcept;
  Workspace& operator=(Workspace&&) noexcept;
  ~Workspace();

  std::span<const Vec3> centers() const noexcept { return centers_; }
  std::span<const double> radii() const noexcept { return radii_; }
  const Eigen::AlignedBox3d& bounds() const noexcept { return bounds_; }
  bool contains(const Vec3& p) const;
  /// Number of balls containing `p`.
  int coverage(const Vec3& p) const;

 private:
  std::vector<Vec3> centers_;
  std::vector<double> radii_;
  double max_radius_ = 0.0;
  Eigen::AlignedBox3d bounds_;
  std::unique_ptr<detail::SpatialHash> index_;
};

Workspace expand_workspace(const Scene& scene, std::span<const Index> part, const GripperModel& gripper);

/// Σ n̂ n̂ᵀ of primitive normals (oriented toward `view_origin`) over `pool` members within `radius` of `p`.
Mat3 normal_moment(const Vec3& p, const Scene& scene, std::span<const Index> pool, double radius,
                   const Vec3& view_origin, int* count = nullptr, Vec3* normal_sum = nullptr);

/// Frame from the normal moment of the `pool` primitives within `radius` of `p`. v1 faces
/// `view_origin`; v3 takes its sign from `reference`, and follows `reference` projected
/// off v1 when the two smallest eigenvalues tie. Ties between the two largest eigenvalues
/// pick the direction of the summed normal within the tied subspace.
/// Throws a precondition error with fewer than 3 neighbours.
LocalFrame local_frame(const Vec3& p, const Scene& scene, std::span<const Index> pool, double radius,
                       const Vec3& view_origin, const Mat3& reference = Mat3::Identity());

struct GraspGrid {
  int y_count = 7;
  double y_extent = 0.02;  ///< offsets span [-y_extent, y_extent]
  int phi_count = 8;       ///< angles -π/2 + k·π / phi_count about v3

  double y_offset(int k) const;
  double phi(int k) const;
};

/// Per-cell outcome counters.
struct GraspDiagnostics {
  int samples = 0;
  int insufficient_support = 0;
  int cells = 0;
  int start_in_collision = 0;
  int no_contact = 0;
  int finger_contact = 0;
  int below_threshold = 0;
  int closing_collision = 0;
  int candidates = 0;

  GraspDiagnostics& operator+=(const GraspDiagnostics& o);
  std::string summary() const;
};

/// Grid search around one frame. Each cell rotates the hand by φ about v3, shifts it by y
/// along its closing axis, starts with the fingertips hand_depth beyond the frame origin
/// and pushes along -x for at most finger_length + 2 hand_depth. The first contact of an
/// inflated primitive sphere (centre, radius max scale) with any gripper box ends the push.
/// Cells are dropped when they start in contact, never touch, touch with a finger first,
/// enclose at most `n_th` part centres, or have non-part geometry in the closing region.
std::vector<GraspCandidate> grid_search_grasps(const LocalFrame& frame, std::span<const Index> part,
                                               const Scene& scene, const GripperModel& gripper,
                                               const GraspGrid& grid, int n_th,
                                               GraspDiagnostics* diagnostics = nullptr, Index sample = 0);

/// Antipodality (mean |cos| between enclosed normals and the closing axis) times
/// N_obj / max N_obj, minus `collision_penalty` scaled by how far the non-part clearance
/// falls short of `margin_scale`. Sorted by score descending, then x*, then grid position.
void score_and_rank(std::vector<GraspCandidate>& candidates, const Scene& scene, std::span<const Index> part,
                    const GripperModel& gripper, const Vec3& view_origin, double margin_scale = 0.005,
                    double collision_penalty = 0.1);

struct GraspConfig {
  int samples = 64;
  double neighborhood_radius = 0.02;  ///< R_p
  GraspGrid grid;
  int n_th = 10;
  int top_k = 5;
  std::uint64_t seed = 0;
  Vec3 view_origin = Vec3::Zero();
  double margin_scale = 0.005;
  double collision_penalty = 0.1;
};

struct GraspResult {
  std::vector<GraspCandidate> candidates;  ///< top-k, best first
  std::vector<Vec3> sample_points;
  GraspDiagnostics diagnostics;
  Index total_candidates = 0;
};

/// Workspace expansion, seeded uniform sampling of the workspace, local frames, grid search
/// and global ranking. Draws are expressed in the first part primitive's frame so the
/// result moves rigidly with the scene. Fewer than `samples` points come back only when
/// the rejection budget runs out.
GraspResult sample_grasps(const Scene& scene, std::span<const Index> part, const GripperModel& gripper,
                          const GraspConfig& config = {});

/// ASCII PLY with the three gripper boxes at every candidate pose.
void write_gripper_ply(std::ostream& out, std::span<const GraspCandidate> candidates, const GripperModel& gripper);

}  // namespace splatgrasp
