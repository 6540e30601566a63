#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "splatgrasp/camera.hpp"
#include "splatgrasp/feature_field.hpp"
#include "splatgrasp/image.hpp"
#include "splatgrasp/scene.hpp"

namespace splatgrasp {

/// One tracked point. Entries run from the seed step onward; positions are only
/// meaningful where visible.
struct PointTrack {
  int camera_id = 0;
  int first_step = 0;
  std::vector<Vec2> positions;
  std::vector<std::uint8_t> visibility;

  bool visible() const { return !visibility.empty() && visibility.back() != 0; }
  const Vec2& position() const { return positions.back(); }
};

/// 2D point tracker. Deterministic for a given frame sequence and seed.
class TrackerOracle {
 public:
  virtual ~TrackerOracle() = default;
  /// Discards previous tracks and starts one per point at `frame`. Returns the handles.
  virtual std::vector<Index> seed(const OracleImage& frame, std::span<const Vec2> points) = 0;
  /// Advances every track to `frame`.
  virtual const std::vector<PointTrack>& step(const OracleImage& frame) = 0;
  virtual const std::vector<PointTrack>& tracks() const = 0;
};

/// What the synthetic tracker is allowed to see: rendered depth and object ids per frame,
/// and each object's world motion since step 0. Object id -1 (background) never moves.
struct TrackerGroundTruth {
  std::function<const ImageD&(int camera, int step)> depth;
  std::function<const LabelImage&(int camera, int step)> object_ids;
  std::function<RigidTransform(int object, int step)> motion;
};

struct SyntheticTrackerConfig {
  double pixel_sigma = 0.0;       ///< Gaussian noise per axis, pixels
  double outlier_fraction = 0.0;  ///< per track and step
  double outlier_jump = 25.0;     ///< uniform jump half-width, pixels
  double occlusion_fraction = 0.0;
  int occlusion_begin = 0;  ///< steps in [begin, end) hide the occluded tracks
  int occlusion_end = 0;
  double depth_tolerance = 0.005;  ///< self-occlusion test slack, metres (plus 1% of z)
  std::uint64_t seed = 0;
};

/// Projects the ground-truth motion of the surface points under the seeds.
class SyntheticTracker final : public TrackerOracle {
 public:
  SyntheticTracker(int camera_id, Camera camera, TrackerGroundTruth truth, SyntheticTrackerConfig config = {});

  std::vector<Index> seed(const OracleImage& frame, std::span<const Vec2> points) override;
  const std::vector<PointTrack>& step(const OracleImage& frame) override;
  const std::vector<PointTrack>& tracks() const override { return tracks_; }

 private:
  int camera_id_;
  Camera camera_;
  TrackerGroundTruth truth_;
  SyntheticTrackerConfig config_;
  std::uint64_t generation_ = 0;
  std::vector<PointTrack> tracks_;
  std::vector<Vec3> local_;    ///< surface points in their object's step-0 frame
  std::vector<int> objects_;
};

struct Correspondence {
  Vec3 before;
  Vec3 after;
  int camera_id = 0;
};

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;
};

/// `count` interior pixels (at least 2 px inside the mask, the image edge counting as
/// boundary) spread over a jittered grid, in row-major order. Returns every interior pixel,
/// with a warning, when there are too few. Throws on an empty mask.
std::vector<Vec2> seed_keypoints(const Mask& mask, int count, std::uint64_t seed);

struct LiftResult {
  std::vector<Vec3> points;  ///< world coordinates of the kept inputs
  IndexSet kept;             ///< input index of each output point
  IndexSet dropped;
};

/// Back-projects pixels through bilinear z-depth. A point is dropped when any tap with
/// nonzero weight is missing, non-positive or non-finite, or when the taps differ by more
/// than `max_tap_spread` (a silhouette). Throws a numerical error when nothing survives.
LiftResult lift_to_3d(std::span<const Vec2> points, const ImageD& depth, const Camera& camera,
                      double max_tap_spread = 0.02);

struct RigidEstimate {
  RigidTransform transform;
  IndexSet inliers;  ///< pairs kept by the displacement clustering
  Index outliers_rejected = 0;
  double eps = 0.0;
};

/// Kabsch on centred point sets, reflection-corrected. Throws a numerical error with fewer
/// than 3 pairs or collinear `before` points.
RigidTransform kabsch(std::span<const Vec3> before, std::span<const Vec3> after);

/// Clusters displacement vectors, keeps the largest cluster (lowest label on ties) and
/// runs Kabsch on it. `eps` <= 0 selects 3× the median distance of the displacements from
/// their component-wise median (floored at 1e-9). `min_pts` is capped at the pair count.
RigidEstimate estimate_rigid(const CorrespondenceSet& correspondences, double eps = 0.0, int min_pts = 5);

struct TrackingConfig {
  int keypoints = 64;  ///< per camera
  double dbscan_eps = 0.0;
  int dbscan_min_pts = 5;
  int refresh_interval = 10;
  double min_visible_fraction = 0.5;
  double max_tap_spread = 0.02;
  std::uint64_t seed = 0;
};

/// Per-camera observation at one step, passed in camera order.
struct TrackingFrame {
  OracleImage image;
  ImageD depth;
};

struct TrackingState {
  std::vector<Camera> cameras;
  std::vector<TrackerOracle*> trackers;  ///< not owned, one per camera
  TrackingConfig config;
  std::vector<std::vector<Vec3>> reference;  ///< per camera and track; NaN where the lift failed
  RigidTransform reference_motion;          ///< estimated motion at the reference step
  RigidTransform applied;                   ///< total motion applied to the scene so far
  int step = 0;
  int reference_step = 0;
  int refreshes = 0;
};

/// Seeds every tracker from the object's rendered mask and lifts the reference points.
TrackingState init_tracking(const Scene& scene, std::span<const Index> object, std::span<const TrackingFrame> frames,
                            std::vector<Camera> cameras, std::vector<TrackerOracle*> trackers,
                            const TrackingConfig& config = {});

struct TrackStepResult {
  RigidTransform incremental;  ///< applied to the scene this step
  RigidTransform total;        ///< estimated motion since tracking started
  Index tracks = 0;
  Index visible = 0;
  Index correspondences = 0;
  Index inliers = 0;
  Index outliers_rejected = 0;
  bool degenerate = false;
  bool refreshed = false;
  std::string status;
};

/// Steps the trackers, pools reference-to-current correspondences from all cameras, and
/// moves the object by the change in the estimate. A degenerate estimate leaves the scene
/// untouched. The reference is re-seeded every `refresh_interval` steps or when fewer than
/// `min_visible_fraction` of the tracks remain visible.
TrackStepResult track_step(Scene& scene, std::span<const Index> object, std::span<const TrackingFrame> frames,
                           TrackingState& state);

}  // namespace splatgrasp
