#pragma once

#include <span>
#include <string>

#include "splatgrasp/grasp.hpp"

namespace splatgrasp {

struct GraspVerdict {
  bool ok = true;
  std::string reason;
};

/// Brute-force re-check of one candidate against every primitive, with gripper boxes
/// rebuilt from the model dimensions: enclosed count, closing-region clearance, no
/// penetration at the pose, contact at the pose and no contact `backoff` further back.
/// Shares no code with the grasp search.
GraspVerdict check_grasp(const Scene& scene, std::span<const Index> part, const GripperModel& gripper,
                         const GraspCandidate& candidate, int n_th, double backoff = 1e-3);

}  // namespace splatgrasp
