#include "splatgrasp/dbscan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Geometry>

#include "splatgrasp/detail/spatial_hash.hpp"

namespace splatgrasp {

namespace {

using Grid = detail::SpatialHash;

bool lex_less(const Vec3& a, const Vec3& b) {
  return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
}

}  // namespace

Clustering dbscan(std::span<const Vec3> points, double eps, int min_pts) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw_precondition("dbscan: eps must be positive and finite");
  if (min_pts < 1) throw_precondition("dbscan: min_pts must be at least 1");
  for (const Vec3& p : points)
    if (!p.allFinite()) throw_precondition("dbscan: non-finite point");

  const Index n = points.size();
  Clustering out;
  out.labels.assign(n, kNoiseLabel);
  if (n == 0) return out;

  const Grid grid(points, eps);
  std::vector<char> core(n, 0);
  for (Index i = 0; i < n; ++i) {
    int count = 0;
    grid.for_each_within(points[i], eps, [&](Index) { ++count; });
    core[i] = count >= min_pts;
  }

  std::vector<Index> stack;
  int next = 0;
  for (Index i = 0; i < n; ++i) {
    if (!core[i] || out.labels[i] != kNoiseLabel) continue;
    out.labels[i] = next;
    stack.assign(1, i);
    while (!stack.empty()) {
      const Index a = stack.back();
      stack.pop_back();
      grid.for_each_within(points[a], eps, [&](Index b) {
        if (core[b] && out.labels[b] == kNoiseLabel) {
          out.labels[b] = next;
          stack.push_back(b);
        }
      });
    }
    ++next;
  }

  // Border points are resolved after all cores are labelled so no expansion order leaks in.
  for (Index i = 0; i < n; ++i) {
    if (core[i]) continue;
    double best = std::numeric_limits<double>::infinity();
    Index best_core = n;
    grid.for_each_within(points[i], eps, [&](Index j) {
      if (!core[j]) return;
      const double d = (points[i] - points[j]).squaredNorm();
      if (d < best || (d == best && lex_less(points[j], points[best_core]))) {
        best = d;
        best_core = j;
      }
    });
    if (best_core != n) out.labels[i] = out.labels[best_core];
  }

  // Renumber clusters by first member in input order.
  std::vector<int> remap(static_cast<std::size_t>(next), kNoiseLabel);
  int renumbered = 0;
  for (int& l : out.labels) {
    if (l == kNoiseLabel) continue;
    if (remap[l] == kNoiseLabel) remap[l] = renumbered++;
    l = remap[l];
  }
  out.sizes.assign(static_cast<std::size_t>(renumbered), 0);
  for (int l : out.labels)
    if (l != kNoiseLabel) ++out.sizes[l];
  return out;
}

std::vector<double> nearest_neighbor_distances(std::span<const Vec3> points) {
  const Index n = points.size();
  std::vector<double> out(n, std::numeric_limits<double>::infinity());
  if (n < 2) return out;
  Eigen::AlignedBox3d bounds;
  for (const Vec3& p : points) bounds.extend(p);
  const double extent = std::max(bounds.diagonal().maxCoeff(), 1e-12);
  // Start with a cell that holds a few points on average and widen until a neighbour appears.
  double cell = extent / std::max(1.0, std::cbrt(static_cast<double>(n)));
  const Grid grid(points, cell);
  for (Index i = 0; i < n; ++i) {
    for (double radius = cell;; radius *= 2.0) {
      double best = std::numeric_limits<double>::infinity();
      grid.for_each_within(points[i], radius, [&](Index j) {
        if (j != i) best = std::min(best, (points[j] - points[i]).squaredNorm());
      });
      if (std::isfinite(best)) {
        out[i] = std::sqrt(best);
        break;
      }
      if (radius > 4.0 * extent) break;
    }
  }
  return out;
}

}  // namespace splatgrasp
