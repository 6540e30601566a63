#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splatgrasp/feature_field.hpp"
#include "splatgrasp/grasp.hpp"
#include "splatgrasp/optimizer.hpp"
#include "splatgrasp/query.hpp"
#include "splatgrasp/synthetic.hpp"
#include "splatgrasp/tracking.hpp"

namespace splatgrasp {

inline constexpr double kLatentInitSigma = 0.01;

/// Back-projects every camera of `step` and labels each primitive with the object and
/// global part whose surface is nearest, when that surface is within `label_tolerance`.
/// Latents are N(0, kLatentInitSigma²) and the decoder random, both seeded; the decoder
/// has the oracle's embedding width.
Scene initial_scene(const SyntheticDataset& dataset, int step, const BackprojectOptions& options, int embedding_dim,
                    std::uint64_t decoder_seed = 0, double label_tolerance = 0.01);

/// Posed colour and depth of every camera at `step`; with an oracle, also the object map
/// (pooled coarse features over detections) and the part map (patch features over boxes).
std::vector<Frame> training_frames(const SyntheticDataset& dataset, int step, const EmbeddingOracle* oracle);

/// Unassigns both feature maps wherever the object map changes (assignment or value)
/// within `margin` pixels, so that splats straddling a silhouette are not pulled toward
/// the object behind them. The part map is also unassigned where its cosine to a
/// neighbour within `margin` drops below `part_edge_cosine`.
void drop_feature_boundaries(Frame& frame, int margin, double part_edge_cosine = 0.9);

/// |a ∩ b| / |a ∪ b| of ascending index sets; 1 when both are empty.
double iou(std::span<const Index> a, std::span<const Index> b);

enum class Stage { Fit, Query, Grasp, Track };
std::string to_string(Stage stage);
Stage parse_stage(const std::string& name);

struct PipelineConfig {
  BackprojectOptions init{.stride = 2};
  double label_tolerance = 0.01;
  std::uint64_t seed = 0;
  FitConfig fit;
  bool fit_features = true;
  int feature_boundary_margin = 1;
  double part_edge_cosine = 0.9;

  /// Empty picks the dataset's moving object.
  std::string object_query;
  /// Empty picks the last part of the target object when it has several, else no part query.
  std::string part_query;
  QuerySet query;  ///< `positive` is overwritten per query
  ClusterOptions clustering{.eps_scale = 4.0};

  /// When non-empty, grasp and track act on these primitives instead of a segmentation.
  IndexSet target;

  GripperModel gripper;
  GraspConfig grasp;

  TrackingConfig tracking;
  SyntheticTrackerConfig tracker;
};

struct StageReport {
  Stage stage = Stage::Fit;
  double seconds = 0.0;
  std::map<std::string, double> metrics;
};

struct PipelineReport {
  std::vector<StageReport> stages;
  Scene scene;
  std::optional<SegmentResult> object;
  std::optional<SegmentResult> part;
  int object_id = -1;
  int part_id = -1;
  std::optional<GraspResult> grasp;
  std::vector<TrackStepResult> track;
  FitStats fit;
};

/// Runs the stages in the order given. Without a Fit stage the scene comes from `scene`
/// or, when that is null, from initial_scene. Grasp uses `config.target`, else the part
/// (else object) segmentation, else the moving object's ground-truth labels; Track picks
/// its object the same way, skipping the part, and replays the dataset's steps with
/// synthetic trackers.
/// A failing stage rethrows its error with the stage name prefixed. An empty list returns
/// an empty report.
PipelineReport run_pipeline(const SyntheticDataset& dataset, const EmbeddingOracle& oracle,
                            std::span<const Stage> stages, const PipelineConfig& config,
                            const Scene* scene = nullptr);

/// Metrics and wall-clock per stage as a JSON document.
std::string report_json(const PipelineReport& report);

}  // namespace splatgrasp
