#include "splatgrasp/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/SVD>

#include "splatgrasp/dbscan.hpp"
#include "splatgrasp/rasterizer.hpp"

namespace splatgrasp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

bool finite(const Vec3& p) { return p.allFinite(); }

bool lift_one(const Vec2& uv, const ImageD& depth, const Camera& camera, double max_spread, Vec3& out) {
  if (!uv.allFinite()) return false;
  const int x0 = static_cast<int>(std::floor(uv.x()));
  const int y0 = static_cast<int>(std::floor(uv.y()));
  const double fx = uv.x() - x0;
  const double fy = uv.y() - y0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double z = 0.0;
  for (int k = 0; k < 4; ++k) {
    const int x = x0 + k % 2;
    const int y = y0 + k / 2;
    const double w = (k % 2 ? fx : 1.0 - fx) * (k / 2 ? fy : 1.0 - fy);
    if (w == 0.0) continue;
    if (!depth.contains(x, y)) return false;
    const double d = depth(x, y);
    if (!std::isfinite(d) || !(d > 0.0)) return false;
    lo = std::min(lo, d);
    hi = std::max(hi, d);
    z += w * d;
  }
  if (hi - lo > max_spread) return false;
  out = camera.backproject(uv.x(), uv.y(), z);
  return true;
}

}  // namespace

SyntheticTracker::SyntheticTracker(int camera_id, Camera camera, TrackerGroundTruth truth,
                                   SyntheticTrackerConfig config)
    : camera_id_(camera_id), camera_(std::move(camera)), truth_(std::move(truth)), config_(config) {
  camera_.validate();
  if (!truth_.depth || !truth_.object_ids || !truth_.motion) throw_precondition("SyntheticTracker: incomplete ground truth");
  if (config_.pixel_sigma < 0 || config_.outlier_fraction < 0 || config_.outlier_fraction > 1 ||
      config_.occlusion_fraction < 0 || config_.occlusion_fraction > 1)
    throw_precondition("SyntheticTracker: invalid noise model");
}

std::vector<Index> SyntheticTracker::seed(const OracleImage& frame, std::span<const Vec2> points) {
  ++generation_;
  tracks_.clear();
  local_.clear();
  objects_.clear();
  const ImageD& depth = truth_.depth(camera_id_, frame.step);
  const LabelImage& ids = truth_.object_ids(camera_id_, frame.step);
  std::vector<Index> handles;
  for (const Vec2& uv : points) {
    const int px = static_cast<int>(std::lround(uv.x()));
    const int py = static_cast<int>(std::lround(uv.y()));
    Vec3 local = Vec3::Constant(kNaN);
    int object = -1;
    if (uv.allFinite() && depth.contains(px, py) && depth(px, py) > 0 && std::isfinite(depth(px, py))) {
      object = ids.contains(px, py) ? ids(px, py) : -1;
      const Vec3 world = camera_.backproject(uv.x(), uv.y(), depth(px, py));
      local = object >= 0 ? truth_.motion(object, frame.step).inverse().apply(world) : world;
    }
    PointTrack track;
    track.camera_id = camera_id_;
    track.first_step = frame.step;
    track.positions.push_back(uv);
    track.visibility.push_back(finite(local) ? 1 : 0);
    handles.push_back(tracks_.size());
    tracks_.push_back(std::move(track));
    local_.push_back(local);
    objects_.push_back(object);
  }
  return handles;
}

const std::vector<PointTrack>& SyntheticTracker::step(const OracleImage& frame) {
  const ImageD& depth = truth_.depth(camera_id_, frame.step);
  std::mt19937_64 rng(mix(mix(config_.seed, static_cast<std::uint64_t>(camera_id_)),
                          mix(generation_, static_cast<std::uint64_t>(frame.step))));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool occluding = frame.step >= config_.occlusion_begin && frame.step < config_.occlusion_end;
  for (Index i = 0; i < tracks_.size(); ++i) {
    // Fixed draw count per track keeps the stream aligned whatever the visibility.
    const Vec2 jitter(noise(rng), noise(rng));
    const double outlier_draw = unit(rng);
    const Vec2 jump(unit(rng) * 2.0 - 1.0, unit(rng) * 2.0 - 1.0);

    PointTrack& track = tracks_[i];
    Vec2 uv = Vec2::Constant(kNaN);
    bool visible = false;
    if (finite(local_[i])) {
      const Vec3 world = objects_[i] >= 0 ? truth_.motion(objects_[i], frame.step).apply(local_[i]) : local_[i];
      if (const auto proj = camera_.project(world)) {
        const Vec2 truth_uv = proj->head<2>();
        const int px = static_cast<int>(std::lround(truth_uv.x()));
        const int py = static_cast<int>(std::lround(truth_uv.y()));
        if (depth.contains(px, py)) {
          const double z = (*proj)(2);
          const double surface = depth(px, py);
          visible = !(std::isfinite(surface) && surface > 0 &&
                      surface < z - config_.depth_tolerance - 0.01 * z);
        }
        uv = truth_uv + config_.pixel_sigma * jitter;
        if (outlier_draw < config_.outlier_fraction) uv += config_.outlier_jump * jump;
      }
    }
    if (occluding && config_.occlusion_fraction > 0) {
      const double h = static_cast<double>(mix(mix(config_.seed, generation_), i) >> 11) * 0x1.0p-53;
      if (h < config_.occlusion_fraction) visible = false;
    }
    track.positions.push_back(uv);
    track.visibility.push_back(visible ? 1 : 0);
  }
  return tracks_;
}

std::vector<Vec2> seed_keypoints(const Mask& mask, int count, std::uint64_t seed) {
  if (count <= 0) throw_precondition("seed_keypoints: count must be positive");
  if (count_nonzero(mask) == 0) throw_precondition("seed_keypoints: empty mask");
  const Mask interior = erode(mask, 2);
  std::vector<Vec2> all;
  for (int y = 0; y < interior.height(); ++y)
    for (int x = 0; x < interior.width(); ++x)
      if (interior(x, y)) all.emplace_back(x, y);
  if (all.size() <= static_cast<std::size_t>(count)) {
    if (all.size() < static_cast<std::size_t>(count))
      warn("seed_keypoints: only " + std::to_string(all.size()) + " interior pixels for " + std::to_string(count) +
           " keypoints");
    return all;
  }
  std::mt19937_64 rng(seed);
  int spacing = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(all.size()) / count)));
  std::vector<Vec2> picks;
  for (;; --spacing) {
    picks.clear();
    const int gw = (interior.width() + spacing - 1) / spacing;
    const int gh = (interior.height() + spacing - 1) / spacing;
    std::vector<std::vector<Index>> cells(static_cast<std::size_t>(gw) * gh);
    for (Index i = 0; i < all.size(); ++i) {
      const int cx = static_cast<int>(all[i].x()) / spacing;
      const int cy = static_cast<int>(all[i].y()) / spacing;
      cells[static_cast<std::size_t>(cy) * gw + cx].push_back(i);
    }
    for (const auto& cell : cells) {
      if (cell.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, cell.size() - 1);
      picks.push_back(all[cell[pick(rng)]]);
    }
    if (picks.size() >= static_cast<std::size_t>(count) || spacing == 1) break;
  }
  std::shuffle(picks.begin(), picks.end(), rng);
  picks.resize(static_cast<std::size_t>(count));
  std::sort(picks.begin(), picks.end(), [](const Vec2& a, const Vec2& b) {
    return a.y() != b.y() ? a.y() < b.y() : a.x() < b.x();
  });
  return picks;
}

LiftResult lift_to_3d(std::span<const Vec2> points, const ImageD& depth, const Camera& camera, double max_tap_spread) {
  LiftResult result;
  for (Index i = 0; i < points.size(); ++i) {
    Vec3 p;
    if (lift_one(points[i], depth, camera, max_tap_spread, p)) {
      result.points.push_back(p);
      result.kept.push_back(i);
    } else {
      result.dropped.push_back(i);
    }
  }
  if (result.points.empty() && !points.empty()) throw_numerical("lift_to_3d: no point has valid depth");
  return result;
}

RigidTransform kabsch(std::span<const Vec3> before, std::span<const Vec3> after) {
  if (before.size() != after.size()) throw_precondition("kabsch: size mismatch");
  if (before.size() < 3) throw_numerical("kabsch: degenerate configuration (fewer than 3 pairs)");
  Vec3 cb = Vec3::Zero();
  Vec3 ca = Vec3::Zero();
  for (Index i = 0; i < before.size(); ++i) {
    cb += before[i];
    ca += after[i];
  }
  cb /= static_cast<double>(before.size());
  ca /= static_cast<double>(after.size());
  Mat3 h = Mat3::Zero();
  Mat3 spread = Mat3::Zero();
  for (Index i = 0; i < before.size(); ++i) {
    const Vec3 b = before[i] - cb;
    h += b * (after[i] - ca).transpose();
    spread += b * b.transpose();
  }
  const Vec3 extent = Eigen::JacobiSVD<Mat3>(spread).singularValues();
  if (!(extent(1) > 1e-12 * std::max(extent(0), 1e-300)) || extent(0) <= 0)
    throw_numerical("kabsch: degenerate configuration (collinear points)");
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = ca - t.rotation * cb;
  return t;
}

RigidEstimate estimate_rigid(const CorrespondenceSet& correspondences, double eps, int min_pts) {
  const auto& pairs = correspondences.pairs;
  if (min_pts < 1) throw_precondition("estimate_rigid: min_pts must be positive");
  for (const auto& c : pairs)
    if (!finite(c.before) || !finite(c.after)) throw_precondition("estimate_rigid: non-finite correspondence");
  if (pairs.size() < 3) throw_numerical("estimate_rigid: degenerate configuration (fewer than 3 pairs)");

  std::vector<Vec3> disp(pairs.size());
  for (Index i = 0; i < pairs.size(); ++i) disp[i] = pairs[i].after - pairs[i].before;

  RigidEstimate est;
  if (eps > 0) {
    est.eps = eps;
  } else {
    auto median = [](std::vector<double> v) {
      const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
      std::nth_element(v.begin(), mid, v.end());
      double m = *mid;
      if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
      return m;
    };
    Vec3 center;
    for (int k = 0; k < 3; ++k) {
      std::vector<double> comp(disp.size());
      for (Index i = 0; i < disp.size(); ++i) comp[i] = disp[i](k);
      center(k) = median(std::move(comp));
    }
    std::vector<double> dev(disp.size());
    for (Index i = 0; i < disp.size(); ++i) dev[i] = (disp[i] - center).norm();
    est.eps = std::max(3.0 * median(std::move(dev)), 1e-9);
  }

  // Fewer pairs than min_pts could never form a cluster.
  const int pts = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(min_pts), pairs.size()));
  const Clustering clusters = dbscan(disp, est.eps, pts);
  if (clusters.cluster_count() == 0) throw_numerical("estimate_rigid: degenerate configuration (no displacement cluster)");
  const auto largest = std::max_element(clusters.sizes.begin(), clusters.sizes.end()) - clusters.sizes.begin();
  std::vector<Vec3> before;
  std::vector<Vec3> after;
  for (Index i = 0; i < pairs.size(); ++i) {
    if (clusters.labels[i] != largest) continue;
    est.inliers.push_back(i);
    before.push_back(pairs[i].before);
    after.push_back(pairs[i].after);
  }
  est.outliers_rejected = pairs.size() - est.inliers.size();
  est.transform = kabsch(before, after);
  return est;
}

namespace {

void reseed(const Scene& scene, std::span<const Index> object, std::span<const TrackingFrame> frames,
            TrackingState& state) {
  state.reference.assign(state.cameras.size(), {});
  for (Index c = 0; c < state.cameras.size(); ++c) {
    const Camera& camera = state.cameras[c];
    const Mask mask = render_mask(scene, object, camera);
    std::vector<Vec2> seeds;
    if (count_nonzero(mask) > 0) {
      const std::uint64_t s = mix(mix(state.config.seed, c), static_cast<std::uint64_t>(state.refreshes));
      seeds = seed_keypoints(mask, state.config.keypoints, s);
    }
    state.trackers[c]->seed(frames[c].image, seeds);
    auto& ref = state.reference[c];
    ref.assign(seeds.size(), Vec3::Constant(kNaN));
    for (Index i = 0; i < seeds.size(); ++i) {
      Vec3 p;
      if (lift_one(seeds[i], frames[c].depth, camera, state.config.max_tap_spread, p)) ref[i] = p;
    }
  }
  state.reference_motion = state.applied;
  state.reference_step = frames.empty() ? state.step : frames[0].image.step;
}

}  // namespace

TrackingState init_tracking(const Scene& scene, std::span<const Index> object, std::span<const TrackingFrame> frames,
                            std::vector<Camera> cameras, std::vector<TrackerOracle*> trackers,
                            const TrackingConfig& config) {
  if (cameras.empty() || cameras.size() != trackers.size() || frames.size() != cameras.size())
    throw_precondition("init_tracking: need one tracker and one frame per camera");
  for (const auto* t : trackers)
    if (t == nullptr) throw_precondition("init_tracking: null tracker");
  if (config.keypoints <= 0 || config.refresh_interval <= 0 || config.dbscan_min_pts < 1)
    throw_precondition("init_tracking: invalid configuration");
  TrackingState state;
  state.cameras = std::move(cameras);
  state.trackers = std::move(trackers);
  state.config = config;
  state.step = frames[0].image.step;
  reseed(scene, object, frames, state);
  return state;
}

TrackStepResult track_step(Scene& scene, std::span<const Index> object, std::span<const TrackingFrame> frames,
                           TrackingState& state) {
  if (frames.size() != state.cameras.size()) throw_precondition("track_step: need one frame per camera");
  state.step = frames[0].image.step;

  TrackStepResult result;
  CorrespondenceSet pairs;
  for (Index c = 0; c < state.cameras.size(); ++c) {
    const auto& tracks = state.trackers[c]->step(frames[c].image);
    const auto& ref = state.reference[c];
    result.tracks += tracks.size();
    for (Index i = 0; i < tracks.size() && i < ref.size(); ++i) {
      if (!tracks[i].visible() || !finite(ref[i])) continue;
      ++result.visible;
      Vec3 p;
      if (lift_one(tracks[i].position(), frames[c].depth, state.cameras[c], state.config.max_tap_spread, p))
        pairs.pairs.push_back({ref[i], p, static_cast<int>(c)});
    }
  }
  result.correspondences = pairs.pairs.size();

  result.total = state.applied;
  try {
    const RigidEstimate est = estimate_rigid(pairs, state.config.dbscan_eps, state.config.dbscan_min_pts);
    result.inliers = est.inliers.size();
    result.outliers_rejected = est.outliers_rejected;
    result.total = est.transform * state.reference_motion;
    result.incremental = result.total * state.applied.inverse();
    apply_transform(scene, object, result.incremental);
    state.applied = result.total;
    result.status = "ok";
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numerical) throw;
    result.degenerate = true;
    result.status = "degenerate";
  }

  const bool stale = state.step - state.reference_step >= state.config.refresh_interval;
  const bool sparse = static_cast<double>(result.visible) < state.config.min_visible_fraction * result.tracks;
  if (stale || sparse || result.tracks == 0) {
    ++state.refreshes;
    reseed(scene, object, frames, state);
    result.refreshed = true;
  }
  return result;
}

}  // namespace splatgrasp
