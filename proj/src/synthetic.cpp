#include "splatgrasp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "splatgrasp/detail/parallel.hpp"

namespace splatgrasp {

namespace {

constexpr double kHitEpsilon = 1e-9;
constexpr double kAcceptEpsilon = 1e-6;
constexpr int kMaxMarchSteps = 512;
constexpr double kAmbient = 0.35;
const Vec3 kLight = Vec3(0.3, -0.5, 0.8).normalized();

double capped_cylinder(const Vec3& p, double radius, double half_height) {
  const Vec2 d(p.head<2>().norm() - radius, std::abs(p.z()) - half_height);
  return std::min(std::max(d.x(), d.y()), 0.0) + d.cwiseMax(0.0).norm();
}

double box_sdf(const Vec3& p, const Vec3& half) {
  const Vec3 q = p.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

// Handle: torus around (r, 0, 0) in the xz-plane, cut at x = r - tube so its ends sink into the body.
double handle_sdf(const Vec3& p, double body_radius, double handle_radius) {
  const double tube = handle_radius * kMugTubeRatio;
  const Vec2 q(Vec2(p.x() - body_radius, p.z()).norm() - handle_radius, p.y());
  return std::max(q.norm() - tube, (body_radius - tube) - p.x());
}

double local_sdf(const ObjectSpec& o, const Vec3& p, int* part) {
  if (part) *part = 0;
  const Vec3& d = o.dimensions;
  switch (o.shape) {
    case ShapeKind::Sphere:
      return p.norm() - d.x();
    case ShapeKind::Box:
      return box_sdf(p, d);
    case ShapeKind::Cylinder:
    case ShapeKind::Plate:
      return capped_cylinder(p, d.x(), d.y());
    case ShapeKind::Mug: {
      const double body = capped_cylinder(p, d.x(), d.y());
      const double handle = handle_sdf(p, d.x(), d.z());
      if (part) *part = handle < body ? 1 : 0;
      return std::min(body, handle);
    }
  }
  return 0.0;
}

Vec3 local_normal(const ObjectSpec& o, const Vec3& p) {
  constexpr double h = 1e-6;
  Vec3 g;
  for (int k = 0; k < 3; ++k) {
    Vec3 a = p;
    Vec3 b = p;
    a(k) += h;
    b(k) -= h;
    g(k) = local_sdf(o, a, nullptr) - local_sdf(o, b, nullptr);
  }
  return g.norm() > 0 ? g.normalized() : Vec3::UnitZ();
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

RigidTransform about_vertical(const Vec3& pivot, double angle, const Vec3& shift) {
  RigidTransform t;
  t.rotation = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
  t.translation = pivot - t.rotation * pivot + shift;
  return t;
}

}  // namespace

std::string to_string(ShapeKind shape) {
  switch (shape) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Box: return "box";
    case ShapeKind::Cylinder: return "cylinder";
    case ShapeKind::Mug: return "mug";
    case ShapeKind::Plate: return "plate";
  }
  return "?";
}

ShapeKind parse_shape(const std::string& name) {
  for (ShapeKind s : {ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Mug, ShapeKind::Plate})
    if (to_string(s) == name) return s;
  throw_precondition("unknown shape: " + name);
}

std::string ObjectSpec::part_label(int part) const {
  if (part < 0 || part >= part_count()) throw_precondition("part index out of range for " + label);
  if (static_cast<int>(part_labels.size()) > part) return part_labels[static_cast<std::size_t>(part)];
  if (shape == ShapeKind::Mug) return part == 0 ? "body" : "handle";
  return label;
}

double ObjectSpec::sdf(const Vec3& world, const RigidTransform& motion, int* part) const {
  const RigidTransform placed = motion * pose;
  return local_sdf(*this, placed.inverse().apply(world), part);
}

double ObjectSpec::bounding_radius() const {
  const Vec3& d = dimensions;
  switch (shape) {
    case ShapeKind::Sphere: return d.x();
    case ShapeKind::Box: return d.norm();
    case ShapeKind::Cylinder:
    case ShapeKind::Plate: return std::hypot(d.x(), d.y());
    case ShapeKind::Mug: return std::max(std::hypot(d.x(), d.y()), d.x() + d.z() * (1.0 + kMugTubeRatio));
  }
  return 0.0;
}

void ObjectSpec::validate() const {
  if (label.empty()) throw_precondition("object without a label");
  const Vec3& d = dimensions;
  const int needed = shape == ShapeKind::Sphere ? 1 : shape == ShapeKind::Box || shape == ShapeKind::Mug ? 3 : 2;
  for (int k = 0; k < needed; ++k)
    if (!(d(k) > 0) || !std::isfinite(d(k))) throw_precondition("object " + label + ": dimensions must be positive");
  if (shape == ShapeKind::Mug && d.z() * (1.0 + kMugTubeRatio) > d.y())
    throw_precondition("mug " + label + ": handle taller than the body");
  if (static_cast<int>(part_labels.size()) > part_count())
    throw_precondition("object " + label + ": too many part labels");
  if (!pose.is_proper(1e-6)) throw_precondition("object " + label + ": pose rotation is not proper");
}

void SyntheticSceneSpec::validate() const {
  if (objects.empty()) throw_precondition("scene spec: empty object list");
  if (cameras.empty()) throw_precondition("scene spec: no cameras");
  std::set<std::string> labels;
  for (const auto& o : objects) {
    o.validate();
    if (!labels.insert(o.label).second) throw_precondition("scene spec: duplicate label " + o.label);
  }
  for (const auto& c : cameras) c.validate();
  if (noise.depth_sigma < 0 || noise.pixel_sigma < 0 || noise.outlier_fraction < 0 || noise.outlier_fraction > 1)
    throw_precondition("scene spec: invalid noise");

  // Interpenetration: grid samples inside one object that are also inside another.
  constexpr int kGrid = 24;
  constexpr double kDepth = 1e-4;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const double ri = objects[i].bounding_radius();
    const Vec3 ci = objects[i].pose.translation;
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      if ((ci - objects[j].pose.translation).norm() > ri + objects[j].bounding_radius()) continue;
      for (int a = 0; a < kGrid; ++a)
        for (int b = 0; b < kGrid; ++b)
          for (int c = 0; c < kGrid; ++c) {
            const Vec3 local = ri * (Vec3(a, b, c) * (2.0 / (kGrid - 1)) - Vec3::Ones());
            const Vec3 w = objects[i].pose.apply(local);
            if (objects[i].sdf(w) < -kDepth && objects[j].sdf(w) < -kDepth)
              throw_precondition("scene spec: objects " + objects[i].label + " and " + objects[j].label +
                                 " interpenetrate");
          }
    }
  }
}

std::string to_string(MotionKind motion) {
  switch (motion) {
    case MotionKind::Static: return "static";
    case MotionKind::Easy: return "easy";
    case MotionKind::Medium: return "medium";
    case MotionKind::Hard: return "hard";
  }
  return "?";
}

MotionKind parse_motion(const std::string& name) {
  for (MotionKind m : {MotionKind::Static, MotionKind::Easy, MotionKind::Medium, MotionKind::Hard})
    if (to_string(m) == name) return m;
  throw_precondition("unknown motion: " + name);
}

std::vector<RigidTransform> make_motion(MotionKind kind, int steps, const Vec3& pivot, std::uint64_t seed) {
  if (steps < 0) throw_precondition("make_motion: negative step count");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double heading = 2.0 * std::numbers::pi * unit(rng);
  const Vec3 dir(std::cos(heading), std::sin(heading), 0.0);
  const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
  const double draw = unit(rng);
  const double draw2 = unit(rng);
  Vec3 shift = Vec3::Zero();
  double angle = 0.0;
  switch (kind) {
    case MotionKind::Static:
      break;
    case MotionKind::Easy:
      shift = (0.08 + 0.04 * draw) * dir;
      break;
    case MotionKind::Medium:
      angle = sign * std::numbers::pi;
      break;
    case MotionKind::Hard:
      shift = (0.06 + 0.04 * draw) * dir;
      angle = sign * (0.5 + 0.25 * draw2) * std::numbers::pi;
      break;
  }
  std::vector<RigidTransform> out;
  for (int s = 0; s <= steps; ++s) {
    const double f = steps == 0 ? 0.0 : static_cast<double>(s) / steps;
    out.push_back(about_vertical(pivot, f * angle, f * shift));
  }
  return out;
}

std::vector<PartInfo> enumerate_parts(const SyntheticSceneSpec& spec) {
  std::vector<PartInfo> parts;
  for (int o = 0; o < static_cast<int>(spec.objects.size()); ++o)
    for (int p = 0; p < spec.objects[static_cast<std::size_t>(o)].part_count(); ++p)
      parts.push_back({o, p, spec.objects[static_cast<std::size_t>(o)].part_label(p)});
  return parts;
}

SyntheticFrame render_synthetic(const SyntheticSceneSpec& spec, int camera_index, std::span<const RigidTransform> motion,
                                int step) {
  if (camera_index < 0 || camera_index >= static_cast<int>(spec.cameras.size()))
    throw_precondition("render_synthetic: camera out of range");
  if (motion.size() != spec.objects.size()) throw_precondition("render_synthetic: one motion per object");
  const Camera& cam = spec.cameras[static_cast<std::size_t>(camera_index)];
  const int w = cam.width;
  const int h = cam.height;
  std::vector<int> part_base;
  int total_parts = 0;
  for (const auto& o : spec.objects) {
    part_base.push_back(total_parts);
    total_parts += o.part_count();
  }
  std::vector<RigidTransform> placed;
  std::vector<RigidTransform> to_local;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    placed.push_back(motion[i] * spec.objects[i].pose);
    to_local.push_back(placed.back().inverse());
  }

  SyntheticFrame f;
  f.camera = camera_index;
  f.step = step;
  f.color = ImageD(w, h, 3, 0.0);
  f.true_depth = ImageD(w, h, 1, 0.0);
  f.object_ids = LabelImage(w, h, 1, -1);
  f.part_ids = LabelImage(w, h, 1, -1);
  const Vec3 origin = cam.center();
  const Vec3 forward = cam.pose.rotation.col(2);

  detail::parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < w; ++x) {
      const Vec3 dir = cam.ray_direction(x, y);
      double best = std::numeric_limits<double>::infinity();
      int best_object = -1;
      Vec3 best_local;
      for (std::size_t i = 0; i < spec.objects.size(); ++i) {
        const ObjectSpec& o = spec.objects[i];
        const Vec3 lo = to_local[i].apply(origin);
        const Vec3 ld = to_local[i].apply_direction(dir);
        const double r = o.bounding_radius() * 1.001;
        const double b = lo.dot(ld);
        const double disc = b * b - (lo.squaredNorm() - r * r);
        if (disc < 0) continue;
        const double t_exit = -b + std::sqrt(disc);
        double t = std::max(-b - std::sqrt(disc), 0.0);
        if (t_exit <= 0 || t >= best) continue;
        double s = 1.0;
        for (int k = 0; k < kMaxMarchSteps && t <= t_exit; ++k) {
          s = local_sdf(o, lo + t * ld, nullptr);
          if (s < kHitEpsilon) break;
          t += s;
        }
        if (s < kAcceptEpsilon && t <= t_exit && t < best) {
          best = t;
          best_object = static_cast<int>(i);
          best_local = lo + t * ld;
        }
      }
      if (best_object < 0) continue;
      const ObjectSpec& o = spec.objects[static_cast<std::size_t>(best_object)];
      int part = 0;
      local_sdf(o, best_local, &part);
      const Vec3 n = placed[static_cast<std::size_t>(best_object)].apply_direction(local_normal(o, best_local));
      const double shade = kAmbient + (1.0 - kAmbient) * std::max(0.0, n.dot(kLight));
      const Vec3 albedo = part == 0 ? o.color : Vec3(0.6 * o.color);
      for (int c = 0; c < 3; ++c) f.color(x, y, c) = std::clamp(albedo(c) * shade, 0.0, 1.0);
      f.true_depth(x, y) = best * dir.dot(forward);
      f.object_ids(x, y) = best_object;
      f.part_ids(x, y) = part_base[static_cast<std::size_t>(best_object)] + part;
    }
  });

  f.depth = f.true_depth;
  if (spec.noise.depth_sigma > 0) {
    std::mt19937_64 rng(mix(mix(spec.seed, static_cast<std::uint64_t>(camera_index)), static_cast<std::uint64_t>(step)));
    std::normal_distribution<double> noise(0.0, spec.noise.depth_sigma);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (f.depth(x, y) > 0) f.depth(x, y) = std::max(1e-3, f.depth(x, y) + noise(rng));
  }
  return f;
}

const SyntheticFrame& SyntheticDataset::frame(int camera, int step) const {
  if (camera < 0 || camera >= camera_count() || step < 0 || step >= step_count())
    throw_precondition("dataset: frame (" + std::to_string(camera) + ", " + std::to_string(step) + ") out of range");
  return frames[static_cast<std::size_t>(step) * spec.cameras.size() + static_cast<std::size_t>(camera)];
}

std::vector<RigidTransform> SyntheticDataset::motion_at(int step) const {
  std::vector<RigidTransform> out;
  for (const auto& m : motion) out.push_back(m[static_cast<std::size_t>(step)]);
  return out;
}

SyntheticDataset generate(const SyntheticSceneSpec& spec, const GenerateOptions& options) {
  spec.validate();
  if (options.steps < 0) throw_precondition("generate: negative step count");
  if (options.moving_object < 0 || options.moving_object >= static_cast<int>(spec.objects.size()))
    throw_precondition("generate: moving object out of range");
  SyntheticDataset ds;
  ds.spec = spec;
  ds.options = options;
  ds.parts = enumerate_parts(spec);
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    if (static_cast<int>(i) == options.moving_object)
      ds.motion.push_back(make_motion(options.motion, options.steps, spec.objects[i].pose.translation, spec.seed));
    else
      ds.motion.push_back(std::vector<RigidTransform>(static_cast<std::size_t>(options.steps) + 1));
  }
  const std::size_t cams = spec.cameras.size();
  ds.frames.resize(cams * static_cast<std::size_t>(ds.step_count()));
  for (int s = 0; s < ds.step_count(); ++s) {
    const auto m = ds.motion_at(s);
    for (std::size_t c = 0; c < cams; ++c)
      ds.frames[static_cast<std::size_t>(s) * cams + c] = render_synthetic(spec, static_cast<int>(c), m, s);
  }
  return ds;
}

std::vector<Camera> ring_cameras(int count, const Vec3& target, double radius, double elevation, int width,
                                 int height, double focal, double azimuth0) {
  if (count <= 0) throw_precondition("ring_cameras: count must be positive");
  std::vector<Camera> out;
  for (int k = 0; k < count; ++k) {
    const double az = azimuth0 + 2.0 * std::numbers::pi * k / count;
    const Vec3 eye =
        target + radius * Vec3(std::cos(elevation) * std::cos(az), std::cos(elevation) * std::sin(az), std::sin(elevation));
    Camera c;
    c.width = width;
    c.height = height;
    c.fx = c.fy = focal;
    c.cx = (width - 1) / 2.0;
    c.cy = (height - 1) / 2.0;
    c.pose.rotation = look_at_rotation(eye, target, -Vec3::UnitZ());
    c.pose.translation = eye;
    out.push_back(c);
  }
  return out;
}

namespace {

ObjectSpec make_object(ShapeKind shape, const std::string& label, const Vec3& dims, const Vec3& at, const Vec3& color,
                       double yaw = 0.0) {
  ObjectSpec o;
  o.shape = shape;
  o.label = label;
  o.dimensions = dims;
  o.color = color;
  o.pose.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  o.pose.translation = at;
  return o;
}

}  // namespace

SyntheticSceneSpec named_scene(const std::string& name, int camera_count, int width, int height, std::uint64_t seed) {
  SyntheticSceneSpec spec;
  spec.seed = seed;
  const Vec3 red(0.85, 0.25, 0.2), green(0.25, 0.7, 0.3), blue(0.2, 0.35, 0.85), yellow(0.9, 0.8, 0.25);
  const Vec3 mug_dims(0.035, 0.06, 0.045);
  if (name == "reference") {
    spec.objects.push_back(make_object(ShapeKind::Box, "box", Vec3(0.05, 0.035, 0.03), Vec3(-0.055, 0.0, 0.03), blue, 0.3));
    spec.objects.push_back(make_object(ShapeKind::Sphere, "sphere", Vec3(0.04, 0, 0), Vec3(0.06, 0.01, 0.04), red));
  } else if (name == "tabletop") {
    spec.objects.push_back(make_object(ShapeKind::Mug, "mug", mug_dims, Vec3(0.0, 0.07, 0.06), yellow, -0.4));
    spec.objects.push_back(make_object(ShapeKind::Box, "box", Vec3(0.03, 0.025, 0.025), Vec3(-0.07, -0.05, 0.025), blue, 0.5));
    spec.objects.push_back(make_object(ShapeKind::Sphere, "sphere", Vec3(0.03, 0, 0), Vec3(0.07, -0.05, 0.03), red));
  } else if (name == "mug") {
    spec.objects.push_back(make_object(ShapeKind::Mug, "mug", mug_dims, Vec3(0.0, 0.0, 0.06), yellow));
  } else if (name == "box") {
    spec.objects.push_back(make_object(ShapeKind::Box, "box", Vec3(0.04, 0.01, 0.04), Vec3(0.0, 0.0, 0.04), blue, 0.4));
  } else if (name == "sphere") {
    spec.objects.push_back(make_object(ShapeKind::Sphere, "sphere", Vec3(0.05, 0, 0), Vec3(0.0, 0.0, 0.05), red));
  } else if (name == "plate") {
    spec.objects.push_back(make_object(ShapeKind::Plate, "plate", Vec3(0.07, 0.005, 0), Vec3(0.0, 0.0, 0.06), green));
    spec.objects.push_back(make_object(ShapeKind::Cylinder, "stand", Vec3(0.02, 0.0275, 0), Vec3(0.0, 0.0, 0.0275), blue));
  } else if (name == "tracking") {
    spec.objects.push_back(make_object(ShapeKind::Box, "box", Vec3(0.05, 0.04, 0.03), Vec3(0.0, 0.0, 0.03), blue));
  } else {
    throw_precondition("unknown scene name: " + name);
  }
  Vec3 target = Vec3::Zero();
  for (const auto& o : spec.objects) target += o.pose.translation;
  target /= static_cast<double>(spec.objects.size());
  spec.cameras = ring_cameras(camera_count, target, 0.35, 0.55, width, height, width * 1.1);
  return spec;
}

}  // namespace splatgrasp
