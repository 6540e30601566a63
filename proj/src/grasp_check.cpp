#include "splatgrasp/grasp_check.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace splatgrasp {

namespace {

struct HandBox {
  Vec3 lo, hi;
  double distance(const Vec3& p) const {
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = std::max({lo[k] - p[k], 0.0, p[k] - hi[k]});
      d2 += d * d;
    }
    return std::sqrt(d2);
  }
  bool strictly_contains(const Vec3& p) const {
    for (int k = 0; k < 3; ++k)
      if (!(p[k] > lo[k] && p[k] < hi[k])) return false;
    return true;
  }
};

}  // namespace

GraspVerdict check_grasp(const Scene& scene, std::span<const Index> part, const GripperModel& gripper,
                         const GraspCandidate& candidate, int n_th, double backoff) {
  const double l = gripper.finger_length, t = gripper.finger_width / 2, w = gripper.max_open_width / 2,
               gap = w - gripper.finger_width;
  const HandBox bodies[3] = {{{-l, gap, -t}, {0, w, t}}, {{-l, -w, -t}, {0, -gap, t}}, {{0, -w, -t}, {2 * t, w, t}}};
  const HandBox closing{{-l, -gap, -t}, {0, gap, t}};
  const std::set<Index> in_part(part.begin(), part.end());
  const RigidTransform& pose = candidate.pose;
  if (!pose.is_proper(1e-9)) return {false, "pose rotation is not proper"};

  constexpr double kTol = 1e-9;
  int enclosed = 0;
  bool touching = false;
  for (Index i = 0; i < scene.size(); ++i) {
    const GaussianPrimitive& g = scene.primitives[i];
    const double rho = g.max_scale();
    const Vec3 q = pose.rotation.transpose() * (g.center - pose.translation);
    const Vec3 q_back = q + Vec3(-backoff, 0, 0);  // gripper backed out along +x
    const bool is_part = in_part.count(i) > 0;
    if (is_part && closing.strictly_contains(q)) ++enclosed;
    if (!is_part && closing.distance(q) < rho - kTol) return {false, "non-part primitive in closing region"};
    for (const HandBox& b : bodies) {
      const double d = b.distance(q);
      if (d < rho - 1e-7) return {false, "primitive penetrates gripper at x*"};
      if (d <= rho + 1e-7) touching = true;
      if (b.distance(q_back) <= rho) return {false, "contact already 1 mm before x*"};
    }
  }
  if (!touching) return {false, "no contact at x*"};
  if (enclosed != candidate.enclosed_count) return {false, "enclosed count mismatch"};
  if (enclosed <= n_th) return {false, "enclosed count not above threshold"};
  return {};
}

}  // namespace splatgrasp
