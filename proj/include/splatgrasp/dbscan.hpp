#pragma once

#include <span>
#include <vector>

#include "splatgrasp/common.hpp"

namespace splatgrasp {

inline constexpr int kNoiseLabel = -1;

struct Clustering {
  std::vector<int> labels;   ///< per point; kNoiseLabel for noise
  std::vector<Index> sizes;  ///< members per cluster
  int cluster_count() const { return static_cast<int>(sizes.size()); }
};

/// Density clustering with inclusive eps balls (a point counts itself toward `min_pts`).
/// Core points form the connected components; each border point joins the cluster of
/// its nearest core point, ties going to the lexicographically smaller core position,
/// so the partition does not depend on input order. Clusters are numbered by their
/// first member in input order.
Clustering dbscan(std::span<const Vec3> points, double eps, int min_pts);

/// Distance from each point to its nearest other point; +inf for a lone point.
std::vector<double> nearest_neighbor_distances(std::span<const Vec3> points);

}  // namespace splatgrasp
