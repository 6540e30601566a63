#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "splatgrasp/common.hpp"

namespace splatgrasp::detail {

/// Uniform hash grid over a borrowed point array. Queries scan the covering cells, or
/// every point when that is cheaper.
class SpatialHash {
 public:
  SpatialHash(std::span<const Vec3> points, double cell) : points_(points), cell_(cell) {
    if (!(cell > 0.0) || !std::isfinite(cell)) throw_precondition("SpatialHash: cell size must be positive");
    for (Index i = 0; i < points.size(); ++i) cells_[key(points[i])].push_back(i);
  }

  /// Calls fn(j) for every point with |p_j - p| <= radius, in no particular order.
  template <typename Fn>
  void for_each_within(const Vec3& p, double radius, Fn&& fn) const {
    const double r2 = radius * radius;
    const double reach_f = std::ceil(radius / cell_);
    const double span = 2.0 * reach_f + 1.0;
    if (span * span * span > static_cast<double>(points_.size())) {
      for (Index j = 0; j < points_.size(); ++j)
        if ((points_[j] - p).squaredNorm() <= r2) fn(j);
      return;
    }
    const auto reach = static_cast<std::int64_t>(reach_f);
    const Key c = key(p);
    for (std::int64_t dx = -reach; dx <= reach; ++dx)
      for (std::int64_t dy = -reach; dy <= reach; ++dy)
        for (std::int64_t dz = -reach; dz <= reach; ++dz) {
          const auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (Index j : it->second)
            if ((points_[j] - p).squaredNorm() <= r2) fn(j);
        }
  }

  /// True once fn(j) holds for some point within `radius`; stops scanning there.
  template <typename Pred>
  bool any_within(const Vec3& p, double radius, Pred&& pred) const {
    const double r2 = radius * radius;
    const double reach_f = std::ceil(radius / cell_);
    const double span = 2.0 * reach_f + 1.0;
    if (span * span * span > static_cast<double>(points_.size())) {
      for (Index j = 0; j < points_.size(); ++j)
        if ((points_[j] - p).squaredNorm() <= r2 && pred(j)) return true;
      return false;
    }
    const auto reach = static_cast<std::int64_t>(reach_f);
    const Key c = key(p);
    for (std::int64_t dx = -reach; dx <= reach; ++dx)
      for (std::int64_t dy = -reach; dy <= reach; ++dy)
        for (std::int64_t dz = -reach; dz <= reach; ++dz) {
          const auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == cells_.end()) continue;
          for (Index j : it->second)
            if ((points_[j] - p).squaredNorm() <= r2 && pred(j)) return true;
        }
    return false;
  }

  /// Indices within `radius`, ascending.
  std::vector<Index> within(const Vec3& p, double radius) const {
    std::vector<Index> out;
    for_each_within(p, radius, [&](Index j) { out.push_back(j); });
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Key {
    std::int64_t x, y, z;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      std::uint64_t h = 1469598103934665603ull;
      for (std::int64_t v : {k.x, k.y, k.z}) {
        h ^= static_cast<std::uint64_t>(v);
        h *= 1099511628211ull;
      }
      return h;
    }
  };

  Key key(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }

  std::span<const Vec3> points_;
  double cell_;
  std::unordered_map<Key, std::vector<Index>, KeyHash> cells_;
};

}  // namespace splatgrasp::detail
