#include "support/reference.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace splatgrasp::testing {

namespace {

struct Footprint {
  double u, v, z;
  double a, b, c;  // inverse covariance [[a, b], [b, c]]
  double opacity;
  Index index;
};

Mat3 rotation_from(const Quat& q_raw) {
  const Quat q = q_raw / q_raw.norm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

}  // namespace

ReferenceImage brute_force_render(const Scene& scene, const Camera& camera) {
  ReferenceImage out;
  out.width = camera.width;
  out.height = camera.height;
  const std::size_t pixels = static_cast<std::size_t>(camera.width) * camera.height;
  out.depth.assign(pixels, 0.0);
  out.color.assign(pixels * 3, 0.0);
  out.feature.assign(pixels * kLatentDim, 0.0);
  out.alpha.assign(pixels, 0.0);

  const Mat3 rc = camera.pose.rotation;
  std::vector<Footprint> fps;
  for (Index i = 0; i < scene.primitives.size(); ++i) {
    const auto& p = scene.primitives[i];
    const Vec3 t = rc.transpose() * (p.center - camera.pose.translation);
    if (t.z() <= 0.01) continue;
    const Mat3 r = rotation_from(p.rotation);
    Mat3 s2 = Mat3::Zero();
    for (int k = 0; k < 3; ++k) s2(k, k) = p.scale[k] * p.scale[k];
    const Mat3 sigma_cam = rc.transpose() * r * s2 * r.transpose() * rc;
    Eigen::Matrix<double, 2, 3> j;
    j << camera.fx / t.z(), 0, -camera.fx * t.x() / (t.z() * t.z()), 0, camera.fy / t.z(),
        -camera.fy * t.y() / (t.z() * t.z());
    Mat2 cov = j * sigma_cam * j.transpose();
    cov(0, 0) += 0.3;
    cov(1, 1) += 0.3;
    const double off = 0.5 * (cov(0, 1) + cov(1, 0));
    const double det = cov(0, 0) * cov(1, 1) - off * off;
    fps.push_back({camera.fx * t.x() / t.z() + camera.cx, camera.fy * t.y() / t.z() + camera.cy, t.z(),
                   cov(1, 1) / det, -off / det, cov(0, 0) / det, p.opacity, i});
  }
  std::sort(fps.begin(), fps.end(), [](const Footprint& l, const Footprint& r) {
    return l.z != r.z ? l.z < r.z : l.index < r.index;
  });

  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * camera.width + x;
      double trans = 1.0;
      for (const Footprint& f : fps) {
        const double dx = x - f.u;
        const double dy = y - f.v;
        const double alpha = std::min(0.99, f.opacity * std::exp(-0.5 * (f.a * dx * dx + 2 * f.b * dx * dy + f.c * dy * dy)));
        const double w = alpha * trans;
        const auto& p = scene.primitives[f.index];
        out.depth[pix] += w * f.z;
        for (int c = 0; c < 3; ++c) out.color[pix * 3 + c] += w * p.color[c];
        for (int c = 0; c < kLatentDim; ++c) out.feature[pix * kLatentDim + c] += w * p.feature_latent[c];
        trans *= 1.0 - alpha;
        if (trans < 1e-4) break;
      }
      out.alpha[pix] = 1.0 - trans;
    }
  }
  return out;
}

std::vector<int> reference_dbscan(const std::vector<Vec3>& points, double eps, int min_pts) {
  const std::size_t n = points.size();
  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j)
      if ((points[i] - points[j]).norm() <= eps) out.push_back(j);
    return out;
  };
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) core[i] = static_cast<int>(neighbours(i).size()) >= min_pts;

  // Core points: connected components of the eps-graph restricted to cores.
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i] != -1) continue;
    std::deque<std::size_t> queue{i};
    label[i] = next;
    while (!queue.empty()) {
      const std::size_t a = queue.front();
      queue.pop_front();
      for (std::size_t b : neighbours(a)) {
        if (core[b] && label[b] == -1) {
          label[b] = next;
          queue.push_back(b);
        }
      }
    }
    ++next;
  }
  // Border points join the cluster of their nearest core neighbour; ties go to the
  // lexicographically smaller core position.
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    double best = std::numeric_limits<double>::infinity();
    std::size_t nearest = 0;
    for (std::size_t j : neighbours(i)) {
      if (!core[j]) continue;
      const double d = (points[i] - points[j]).norm();
      const bool tie_wins = d == best && label[i] != -1 &&
                            std::lexicographical_compare(points[j].data(), points[j].data() + 3,
                                                         points[nearest].data(), points[nearest].data() + 3);
      if (d < best || tie_wins) {
        nearest = j;
        best = d;
        label[i] = label[j];
      }
    }
  }
  return label;
}

}  // namespace splatgrasp::testing
