#include "splatgrasp/grasp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "splatgrasp/detail/parallel.hpp"
#include "splatgrasp/detail/spatial_hash.hpp"

namespace splatgrasp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxAttemptsPerSample = 1000;

/// Hand axes at φ = 0: x = v1, y = v2, z = -v3 (right-handed).
Mat3 hand_axes(const LocalFrame& f) {
  Mat3 h;
  h.col(0) = f.axes.col(2);
  h.col(1) = f.axes.col(1);
  h.col(2) = -f.axes.col(0);
  return h;
}

/// Squared distance from `c` to the box, ignoring the x axis.
double lateral_distance2(const GripperBox& b, const Vec3& c) {
  const double dy = std::max({b.lo.y() - c.y(), 0.0, c.y() - b.hi.y()});
  const double dz = std::max({b.lo.z() - c.z(), 0.0, c.z() - b.hi.z()});
  return dy * dy + dz * dz;
}

double box_distance(const GripperBox& b, const Vec3& c) {
  const Vec3 d = (b.lo - c).cwiseMax(Vec3::Zero()).cwiseMax(c - b.hi);
  return d.norm();
}

/// Contact interval [s_lo, s_hi] of a sphere (gripper coords at s = 0) moving along +x
/// relative to the box as the gripper advances by s along -x. Empty when s_lo > s_hi.
std::pair<double, double> contact_interval(const GripperBox& b, const Vec3& c, double radius) {
  const double d2 = lateral_distance2(b, c);
  if (d2 > radius * radius) return {kInf, -kInf};
  const double h = std::sqrt(radius * radius - d2);
  return {b.lo.x() - h - c.x(), b.hi.x() + h - c.x()};
}

bool strictly_inside(const GripperBox& b, const Vec3& c) {
  return (c.array() > b.lo.array()).all() && (c.array() < b.hi.array()).all();
}

Mat3 rotation_z(double phi) {
  Mat3 r;
  r << std::cos(phi), -std::sin(phi), 0, std::sin(phi), std::cos(phi), 0, 0, 0, 1;
  return r;
}

/// Bounding radius, around the frame origin, of every gripper point over the whole sweep.
double sweep_radius(const GripperModel& g, const GraspGrid& grid) {
  const double along = g.finger_length + g.hand_depth + g.finger_width;
  return std::abs(grid.y_extent) +
         std::sqrt(along * along + 0.25 * g.finger_width * g.finger_width + 0.25 * g.max_open_width * g.max_open_width);
}

struct SearchContext {
  const Scene& scene;
  const std::vector<char>& is_part;
  const GripperModel& gripper;
  const GripperGeometry geometry;
  const GraspGrid& grid;
  int n_th;
};

std::vector<GraspCandidate> search_cells(const LocalFrame& frame, std::span<const Index> pool, const SearchContext& ctx,
                                         GraspDiagnostics& diag, Index sample) {
  const GripperModel& g = ctx.gripper;
  const GripperGeometry& geo = ctx.geometry;
  const GripperBox bodies[3] = {geo.fingers[0], geo.fingers[1], geo.palm};
  const double start = g.finger_length + g.hand_depth;
  const double travel = g.finger_length + 2.0 * g.hand_depth;

  const Mat3 hand = hand_axes(frame);
  // Rotation about z and the y offset leave the frame-z coordinate unchanged, so primitives
  // outside the gripper's z slab can never touch a body in any cell.
  double z_reach = 0.0;
  for (const GripperBox& b : bodies) z_reach = std::max({z_reach, std::abs(b.lo.z()), std::abs(b.hi.z())});
  std::vector<Index> slab;
  for (Index k = 0; k < pool.size(); ++k) {
    const GaussianPrimitive& prim = ctx.scene.primitives[pool[k]];
    if (std::abs(hand.col(2).dot(prim.center - frame.origin)) - prim.max_scale() <= z_reach + 1e-9) slab.push_back(k);
  }

  std::vector<GraspCandidate> out;
  std::vector<Vec3> local(pool.size());
  for (int yi = 0; yi < ctx.grid.y_count; ++yi) {
    for (int pi = 0; pi < ctx.grid.phi_count; ++pi) {
      ++diag.cells;
      const Mat3 rot = hand * rotation_z(ctx.grid.phi(pi));
      const Vec3 origin0 = frame.origin + rot.col(1) * ctx.grid.y_offset(yi) + rot.col(0) * start;

      double first = kInf;
      bool finger_first = false;
      bool start_collision = false;
      for (Index k : slab) {
        const GaussianPrimitive& prim = ctx.scene.primitives[pool[k]];
        local[k] = rot.transpose() * (prim.center - origin0);
        const double radius = prim.max_scale();
        for (int b = 0; b < 3; ++b) {
          const auto [lo, hi] = contact_interval(bodies[b], local[k], radius);
          if (lo > hi || hi < 0.0) continue;
          if (lo <= 0.0) start_collision = true;
          const double s = std::max(lo, 0.0);
          if (s < first || (s == first && b < 2)) {
            first = s;
            finger_first = b < 2;
          }
        }
      }
      if (start_collision) {
        ++diag.start_in_collision;
        continue;
      }
      if (first > travel) {
        ++diag.no_contact;
        continue;
      }
      if (finger_first) {
        ++diag.finger_contact;
        continue;
      }

      int enclosed = 0;
      bool blocked = false;
      double margin = kInf;
      for (Index k = 0; k < pool.size(); ++k) {
        const Vec3 q = rot.transpose() * (ctx.scene.primitives[pool[k]].center - origin0) + Vec3(first, 0, 0);
        const bool part = ctx.is_part[pool[k]] != 0;
        if (part) {
          if (strictly_inside(geo.closing, q)) ++enclosed;
          continue;
        }
        const double radius = ctx.scene.primitives[pool[k]].max_scale();
        const double closing_gap = box_distance(geo.closing, q) - radius;
        if (closing_gap < 0.0) {
          blocked = true;
          break;
        }
        double gap = closing_gap;
        for (const GripperBox& b : bodies) gap = std::min(gap, box_distance(b, q) - radius);
        margin = std::min(margin, gap);
      }
      if (blocked) {
        ++diag.closing_collision;
        continue;
      }
      if (enclosed <= ctx.n_th) {
        ++diag.below_threshold;
        continue;
      }
      ++diag.candidates;
      GraspCandidate c;
      c.pose.rotation = rot;
      c.pose.translation = origin0 - rot.col(0) * first;
      c.contact_offset = first;
      c.enclosed_count = enclosed;
      c.collision_margin = margin;
      c.sample = sample;
      c.y_index = yi;
      c.phi_index = pi;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<char> part_flags(const Scene& scene, std::span<const Index> part) {
  std::vector<char> flags(scene.size(), 0);
  for (Index i : part) {
    if (i >= scene.size()) throw_precondition("grasp: part index out of range");
    flags[i] = 1;
  }
  return flags;
}

/// Unit vector in the plane orthogonal to `axis` derived from `reference`. A fixed
/// irrational mix of the columns keeps axis-aligned geometry away from exact orthogonality.
Vec3 project_reference(const Mat3& reference, const Vec3& axis) {
  const Vec3 mix = reference.col(0) + std::numbers::pi * reference.col(1) + std::numbers::e * reference.col(2);
  for (const Vec3& r : {mix, Vec3(reference.col(0)), Vec3(reference.col(1))}) {
    const Vec3 off = r - axis * axis.dot(r);
    if (off.norm() > 1e-6 * r.norm()) return off.normalized();
  }
  return axis.unitOrthogonal();
}

}  // namespace

void GripperModel::validate() const {
  for (double v : {finger_length, finger_width, hand_depth, max_open_width})
    if (!(v > 0.0) || !std::isfinite(v)) throw_precondition("gripper: dimensions must be positive");
  if (!(collision_radius >= 0.0) || !std::isfinite(collision_radius))
    throw_precondition("gripper: collision radius must be non-negative");
  if (!(max_open_width > 2.0 * finger_width)) throw_precondition("gripper: max_open_width must exceed 2 finger_width");
}

GripperGeometry gripper_geometry(const GripperModel& g) {
  const double L = g.finger_length, t = 0.5 * g.finger_width, outer = 0.5 * g.max_open_width,
               inner = 0.5 * g.inner_gap();
  GripperGeometry geo;
  geo.fingers[0] = {Vec3(-L, inner, -t), Vec3(0, outer, t)};
  geo.fingers[1] = {Vec3(-L, -outer, -t), Vec3(0, -inner, t)};
  geo.palm = {Vec3(0, -outer, -t), Vec3(g.finger_width, outer, t)};
  geo.closing = {Vec3(-L, -inner, -t), Vec3(0, inner, t)};
  return geo;
}

Workspace::Workspace() = default;
Workspace::Workspace(Workspace&&) noexcept = default;
Workspace& Workspace::operator=(Workspace&&) noexcept = default;
Workspace::~Workspace() = default;

Workspace::Workspace(std::vector<Vec3> centers, std::vector<double> radii)
    : centers_(std::move(centers)), radii_(std::move(radii)) {
  if (centers_.size() != radii_.size()) throw_precondition("Workspace: centre and radius counts differ");
  for (Index i = 0; i < centers_.size(); ++i) {
    max_radius_ = std::max(max_radius_, radii_[i]);
    bounds_.extend(centers_[i] - Vec3::Constant(radii_[i]));
    bounds_.extend(centers_[i] + Vec3::Constant(radii_[i]));
  }
  if (!centers_.empty() && max_radius_ > 0.0) index_ = std::make_unique<detail::SpatialHash>(centers_, max_radius_);
}

int Workspace::coverage(const Vec3& p) const {
  if (!index_) return 0;
  int count = 0;
  index_->for_each_within(p, max_radius_, [&](Index j) {
    if ((centers_[j] - p).squaredNorm() <= radii_[j] * radii_[j]) ++count;
  });
  return count;
}

bool Workspace::contains(const Vec3& p) const {
  if (!index_) return false;
  return index_->any_within(p, max_radius_,
                            [&](Index j) { return (centers_[j] - p).squaredNorm() <= radii_[j] * radii_[j]; });
}

Workspace expand_workspace(const Scene& scene, std::span<const Index> part, const GripperModel& gripper) {
  if (part.empty()) throw_precondition("expand_workspace: empty part");
  gripper.validate();
  std::vector<Vec3> centers;
  std::vector<double> radii;
  for (Index i : part) {
    if (i >= scene.size()) throw_precondition("expand_workspace: part index out of range");
    centers.push_back(scene.primitives[i].center);
    radii.push_back(scene.primitives[i].max_scale() + gripper.collision_radius);
  }
  return Workspace(std::move(centers), std::move(radii));
}

Mat3 normal_moment(const Vec3& p, const Scene& scene, std::span<const Index> pool, double radius,
                   const Vec3& view_origin, int* count, Vec3* normal_sum) {
  Mat3 m = Mat3::Zero();
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (Index i : pool) {
    const GaussianPrimitive& g = scene.primitives[i];
    if ((g.center - p).norm() > radius) continue;
    const Vec3 normal = primitive_normal(g, view_origin).normal;
    m += normal * normal.transpose();
    sum += normal;
    ++n;
  }
  if (count) *count = n;
  if (normal_sum) *normal_sum = sum;
  return m;
}

LocalFrame local_frame(const Vec3& p, const Scene& scene, std::span<const Index> pool, double radius,
                       const Vec3& view_origin, const Mat3& reference) {
  LocalFrame f;
  f.origin = p;
  Vec3 normal_sum;
  f.moment = normal_moment(p, scene, pool, radius, view_origin, &f.neighbors, &normal_sum);
  if (f.neighbors < 3) throw_precondition("local_frame: fewer than 3 primitives within R_p");

  const Eigen::SelfAdjointEigenSolver<Mat3> eig(f.moment);
  const Vec3 lambda = eig.eigenvalues();  // ascending
  const Mat3 vec = eig.eigenvectors();
  const double tol = 1e-9 * std::max(1.0, f.moment.trace());

  Vec3 v1 = vec.col(2);
  if (lambda[2] - lambda[1] <= tol) {
    // Tied leading eigenvalues: take the summed normal inside the tied subspace.
    Vec3 proj = Vec3::Zero();
    for (int k = 0; k < 3; ++k)
      if (lambda[2] - lambda[k] <= tol) proj += vec.col(k) * vec.col(k).dot(normal_sum);
    if (proj.norm() > 1e-9) v1 = proj.normalized();
  }
  if (v1.dot(view_origin - p) < 0.0) v1 = -v1;

  Vec3 v3;
  if (lambda[1] - lambda[0] > tol) {
    v3 = (vec.col(0) - v1 * v1.dot(vec.col(0))).normalized();
    if (v3.dot(project_reference(reference, v1)) < 0.0) v3 = -v3;
  } else {
    v3 = project_reference(reference, v1);
  }
  const Vec3 v2 = v1.cross(v3);
  f.axes.col(0) = v3;
  f.axes.col(1) = v2;
  f.axes.col(2) = v1;
  f.eigenvalues = Vec3(v1.dot(f.moment * v1), v2.dot(f.moment * v2), v3.dot(f.moment * v3));
  return f;
}

double GraspGrid::y_offset(int k) const {
  if (y_count <= 1) return 0.0;
  return -y_extent + 2.0 * y_extent * k / (y_count - 1);
}

double GraspGrid::phi(int k) const { return std::numbers::pi * (static_cast<double>(k) / phi_count - 0.5); }

GraspDiagnostics& GraspDiagnostics::operator+=(const GraspDiagnostics& o) {
  samples += o.samples;
  insufficient_support += o.insufficient_support;
  cells += o.cells;
  start_in_collision += o.start_in_collision;
  no_contact += o.no_contact;
  finger_contact += o.finger_contact;
  below_threshold += o.below_threshold;
  closing_collision += o.closing_collision;
  candidates += o.candidates;
  return *this;
}

std::string GraspDiagnostics::summary() const {
  std::ostringstream s;
  s << "samples=" << samples << " insufficient_support=" << insufficient_support << " cells=" << cells
    << " start_in_collision=" << start_in_collision << " no_contact=" << no_contact
    << " finger_contact=" << finger_contact << " below_threshold=" << below_threshold
    << " closing_collision=" << closing_collision << " candidates=" << candidates;
  return s.str();
}

std::vector<GraspCandidate> grid_search_grasps(const LocalFrame& frame, std::span<const Index> part,
                                               const Scene& scene, const GripperModel& gripper,
                                               const GraspGrid& grid, int n_th, GraspDiagnostics* diagnostics,
                                               Index sample) {
  gripper.validate();
  if (grid.y_count < 1 || grid.phi_count < 1) throw_precondition("grid_search_grasps: empty grid");
  const std::vector<char> is_part = part_flags(scene, part);
  const double reach = sweep_radius(gripper, grid);
  IndexSet pool;
  for (Index i = 0; i < scene.size(); ++i)
    if ((scene.primitives[i].center - frame.origin).norm() <= reach + scene.primitives[i].max_scale()) pool.push_back(i);
  const SearchContext ctx{scene, is_part, gripper, gripper_geometry(gripper), grid, n_th};
  GraspDiagnostics local;
  auto out = search_cells(frame, pool, ctx, local, sample);
  if (diagnostics) *diagnostics += local;
  return out;
}

void score_and_rank(std::vector<GraspCandidate>& candidates, const Scene& scene, std::span<const Index> part,
                    const GripperModel& gripper, const Vec3& view_origin, double margin_scale,
                    double collision_penalty) {
  if (candidates.empty()) return;
  const GripperGeometry geo = gripper_geometry(gripper);
  std::vector<Vec3> normals;
  normals.reserve(part.size());
  for (Index i : part) normals.push_back(primitive_normal(scene.primitives[i], view_origin).normal);

  int max_enclosed = 0;
  for (const auto& c : candidates) max_enclosed = std::max(max_enclosed, c.enclosed_count);

  detail::parallel_for(candidates.size(), [&](Index k) {
    GraspCandidate& c = candidates[k];
    const Vec3 axis = c.closing_axis();
    double sum = 0.0;
    int n = 0;
    for (Index j = 0; j < part.size(); ++j) {
      const Vec3 q = c.pose.rotation.transpose() * (scene.primitives[part[j]].center - c.pose.translation);
      if (!strictly_inside(geo.closing, q)) continue;
      sum += std::abs(normals[j].dot(axis));
      ++n;
    }
    c.antipodality = n > 0 ? sum / n : 0.0;
    const double enclosure = max_enclosed > 0 ? static_cast<double>(c.enclosed_count) / max_enclosed : 0.0;
    const double shortfall =
        margin_scale > 0.0 ? 1.0 - std::clamp(c.collision_margin / margin_scale, 0.0, 1.0) : 0.0;
    c.score = c.antipodality * enclosure - collision_penalty * shortfall;
  });
  std::sort(candidates.begin(), candidates.end(), [](const GraspCandidate& a, const GraspCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.contact_offset != b.contact_offset) return a.contact_offset < b.contact_offset;
    if (a.sample != b.sample) return a.sample < b.sample;
    if (a.y_index != b.y_index) return a.y_index < b.y_index;
    return a.phi_index < b.phi_index;
  });
}

GraspResult sample_grasps(const Scene& scene, std::span<const Index> part, const GripperModel& gripper,
                          const GraspConfig& config) {
  if (part.empty()) throw_precondition("sample_grasps: empty part");
  gripper.validate();
  if (config.samples < 0) throw_precondition("sample_grasps: negative sample count");
  if (!(config.neighborhood_radius > 0.0)) throw_precondition("sample_grasps: R_p must be positive");
  if (config.grid.y_count < 1 || config.grid.phi_count < 1) throw_precondition("sample_grasps: empty grid");
  if (config.top_k < 1) throw_precondition("sample_grasps: top_k must be positive");

  GraspResult result;
  const Workspace workspace = expand_workspace(scene, part, gripper);
  const std::vector<char> is_part = part_flags(scene, part);
  if (config.samples == 0) return result;

  // Uniform rejection sampling of the union of balls from its bounding ball about the part
  // centroid. Offsets are expressed in the first part primitive's frame so the draws move
  // rigidly with the scene.
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& c : workspace.centers()) centroid += c;
  centroid /= static_cast<double>(workspace.centers().size());
  double bound = 0.0;
  for (Index b = 0; b < workspace.centers().size(); ++b)
    bound = std::max(bound, (workspace.centers()[b] - centroid).norm() + workspace.radii()[b]);
  const Mat3 sample_frame = scene.primitives[part.front()].rotation_matrix();
  const long max_attempts = static_cast<long>(config.samples) * kMaxAttemptsPerSample;
  for (long attempt = 0; attempt < max_attempts && static_cast<int>(result.sample_points.size()) < config.samples;
       ++attempt) {
    Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
    const double len = dir.norm();
    const double radial = std::cbrt(unit(rng));
    if (len == 0.0) continue;
    const Vec3 p = centroid + sample_frame * (dir / len) * (radial * bound);
    if (workspace.contains(p)) result.sample_points.push_back(p);
  }

  std::vector<Vec3> part_centers;
  for (Index i : part) part_centers.push_back(scene.primitives[i].center);
  std::vector<Vec3> all_centers;
  double max_scale = 0.0;
  for (const auto& g : scene.primitives) {
    all_centers.push_back(g.center);
    max_scale = std::max(max_scale, g.max_scale());
  }
  const double reach = sweep_radius(gripper, config.grid) + max_scale;
  const detail::SpatialHash part_hash(part_centers, config.neighborhood_radius);
  const detail::SpatialHash scene_hash(all_centers, 0.5 * reach);
  const SearchContext ctx{scene, is_part, gripper, gripper_geometry(gripper), config.grid, config.n_th};

  const Index n = result.sample_points.size();
  std::vector<std::vector<GraspCandidate>> per_sample(n);
  std::vector<GraspDiagnostics> diags(n);
  detail::parallel_for(n, [&](Index k) {
    GraspDiagnostics& d = diags[k];
    d.samples = 1;
    const Vec3& p = result.sample_points[k];
    IndexSet near;
    for (Index j : part_hash.within(p, config.neighborhood_radius)) near.push_back(part[j]);
    LocalFrame frame;
    try {
      frame = local_frame(p, scene, near, config.neighborhood_radius, config.view_origin,
                          sample_frame);
    } catch (const Error&) {
      ++d.insufficient_support;
      return;
    }
    const IndexSet pool = scene_hash.within(p, reach);
    per_sample[k] = search_cells(frame, pool, ctx, d, k);
  });

  std::vector<GraspCandidate> all;
  for (Index k = 0; k < n; ++k) {
    result.diagnostics += diags[k];
    all.insert(all.end(), per_sample[k].begin(), per_sample[k].end());
  }
  result.total_candidates = all.size();
  if (all.empty()) {
    warn("sample_grasps: no candidates (" + result.diagnostics.summary() + ")");
    return result;
  }
  score_and_rank(all, scene, part, gripper, config.view_origin, config.margin_scale, config.collision_penalty);
  if (all.size() > static_cast<Index>(config.top_k)) all.resize(static_cast<Index>(config.top_k));
  result.candidates = std::move(all);
  return result;
}

void write_gripper_ply(std::ostream& out, std::span<const GraspCandidate> candidates, const GripperModel& gripper) {
  const GripperGeometry geo = gripper_geometry(gripper);
  const GripperBox boxes[3] = {geo.fingers[0], geo.fingers[1], geo.palm};
  const Index box_count = candidates.size() * 3;
  out << "ply\nformat ascii 1.0\nelement vertex " << box_count * 8
      << "\nproperty float x\nproperty float y\nproperty float z\nelement face " << box_count * 6
      << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (const GraspCandidate& c : candidates) {
    for (const GripperBox& b : boxes) {
      for (int v = 0; v < 8; ++v) {
        const Vec3 local((v & 1) ? b.hi.x() : b.lo.x(), (v & 2) ? b.hi.y() : b.lo.y(), (v & 4) ? b.hi.z() : b.lo.z());
        const Vec3 w = c.pose.apply(local);
        out << w.x() << ' ' << w.y() << ' ' << w.z() << '\n';
      }
    }
  }
  static constexpr int kFaces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (Index box = 0; box < box_count; ++box) {
    for (const auto& f : kFaces) {
      out << 4;
      for (int v : f) out << ' ' << box * 8 + v;
      out << '\n';
    }
  }
}

}  // namespace splatgrasp
