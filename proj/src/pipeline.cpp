#include "splatgrasp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

#include "splatgrasp/detail/json_io.hpp"
#include "splatgrasp/grasp_check.hpp"
#include "splatgrasp/rasterizer.hpp"

namespace splatgrasp {

Scene initial_scene(const SyntheticDataset& dataset, int step, const BackprojectOptions& options, int embedding_dim,
                    std::uint64_t decoder_seed, double label_tolerance) {
  const auto motion = dataset.motion_at(step);
  const auto& objects = dataset.spec.objects;
  // Global part id of (object, local part).
  std::vector<int> first_part(objects.size(), 0);
  for (std::size_t p = dataset.parts.size(); p-- > 0;)
    if (dataset.parts[p].local == 0) first_part[static_cast<std::size_t>(dataset.parts[p].object)] = static_cast<int>(p);

  Scene scene;
  for (int c = 0; c < dataset.camera_count(); ++c) {
    const SyntheticFrame& f = dataset.frame(c, step);
    bool any = false;
    for (double d : f.depth.data()) any = any || (std::isfinite(d) && d > 0.0);
    if (!any) continue;
    auto prims = backproject_depth(dataset.spec.cameras[static_cast<std::size_t>(c)], f.depth, f.color, options);
    scene.primitives.insert(scene.primitives.end(), prims.begin(), prims.end());
  }
  if (scene.primitives.empty()) throw_precondition("initial_scene: no camera sees any surface");

  scene.labels.resize(scene.primitives.size());
  for (Index i = 0; i < scene.size(); ++i) {
    double best = label_tolerance;
    for (std::size_t o = 0; o < objects.size(); ++o) {
      int part = 0;
      const double d = std::abs(objects[o].sdf(scene.primitives[i].center, motion[o], &part));
      if (d <= best) {
        best = d;
        scene.labels[i] = {static_cast<int>(o), first_part[o] + part};
      }
    }
  }
  // Zero latents decode to a zero vector, where the cosine loss has no gradient.
  std::mt19937_64 rng(decoder_seed ^ 0x5DEECE66Dull);
  std::normal_distribution<double> g(0.0, kLatentInitSigma);
  for (auto& p : scene.primitives)
    for (int c = 0; c < kLatentDim; ++c) p.feature_latent[c] = g(rng);
  scene.decoder = DecoderWeights::random(embedding_dim, decoder_seed);
  return scene;
}

void drop_feature_boundaries(Frame& frame, int margin, double part_edge_cosine) {
  if (margin <= 0 || frame.f_obj.empty()) return;
  const FeatureMap& obj = frame.f_obj;
  const int w = obj.width(), h = obj.height();
  auto same = [&obj](int x0, int y0, int x1, int y1) {
    if (obj.assigned(x0, y0) != obj.assigned(x1, y1)) return false;
    return !obj.assigned(x0, y0) || obj.at(x0, y0) == obj.at(x1, y1);
  };
  Mask boundary(w, h, 1, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int dy = -margin; dy <= margin && !boundary(x, y); ++dy)
        for (int dx = -margin; dx <= margin; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h || same(x, y, nx, ny)) continue;
          boundary(x, y) = 1;
          break;
        }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!boundary(x, y)) continue;
      frame.f_obj.unassign(x, y);
      if (!frame.f_part.empty()) frame.f_part.unassign(x, y);
    }
  if (frame.f_part.empty()) return;
  const FeatureMap part = frame.f_part;
  auto unit = [&part](int x, int y) -> Eigen::VectorXd { return part.at(x, y).cast<double>().normalized(); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!part.assigned(x, y)) continue;
      const Eigen::VectorXd f = unit(x, y);
      bool edge = false;
      for (int dy = -margin; dy <= margin && !edge; ++dy)
        for (int dx = -margin; dx <= margin && !edge; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h || !part.assigned(nx, ny)) continue;
          edge = f.dot(unit(nx, ny)) < part_edge_cosine;
        }
      if (edge) frame.f_part.unassign(x, y);
    }
}

std::vector<Frame> training_frames(const SyntheticDataset& dataset, int step, const EmbeddingOracle* oracle) {
  std::vector<Frame> frames;
  for (int c = 0; c < dataset.camera_count(); ++c) {
    const SyntheticFrame& f = dataset.frame(c, step);
    Frame out;
    out.camera = dataset.spec.cameras[static_cast<std::size_t>(c)];
    out.color = f.color;
    out.depth = f.depth;
    if (oracle) {
      const OracleImage image{f.color, c, step};
      const DetectionSet det = oracle->detections(image);
      out.f_obj = build_object_feature_map(det, oracle->image_features(image));
      out.f_part = build_part_feature_map(det.boxes, image, *oracle);
    }
    frames.push_back(std::move(out));
  }
  return frames;
}

double iou(std::span<const Index> a, std::span<const Index> b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0, i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Fit: return "fit";
    case Stage::Query: return "query";
    case Stage::Grasp: return "grasp";
    case Stage::Track: return "track";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : {Stage::Fit, Stage::Query, Stage::Grasp, Stage::Track})
    if (to_string(s) == name) return s;
  throw_precondition("unknown stage \"" + name + "\" (expected fit, query, grasp or track)");
}

namespace {

int find_object(const SyntheticDataset& dataset, const std::string& label) {
  const auto& objects = dataset.spec.objects;
  for (std::size_t o = 0; o < objects.size(); ++o)
    if (objects[o].label == label) return static_cast<int>(o);
  return -1;
}

int find_part(const SyntheticDataset& dataset, int object, const std::string& label) {
  for (std::size_t p = 0; p < dataset.parts.size(); ++p)
    if (dataset.parts[p].object == object && dataset.parts[p].label == label) return static_cast<int>(p);
  return -1;
}

// Mean training-view PSNR and depth L1 (metres) of alpha-normalised depth where alpha > 0.5.
std::pair<double, double> view_quality(const Scene& scene, const SyntheticDataset& dataset, int step) {
  double sum_psnr = 0.0, sum_l1 = 0.0;
  std::size_t n_l1 = 0;
  for (int c = 0; c < dataset.camera_count(); ++c) {
    const SyntheticFrame& f = dataset.frame(c, step);
    const RenderedBuffers r = render(scene, dataset.spec.cameras[static_cast<std::size_t>(c)],
                                     kChannelDepth | kChannelColor);
    sum_psnr += psnr(r.color, f.color);
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) {
        const double gt = f.true_depth(x, y);
        if (!(gt > 0.0)) continue;
        const double a = r.alpha(x, y);
        sum_l1 += a > 0.5 ? std::abs(r.depth(x, y) / a - gt) : gt;
        ++n_l1;
      }
  }
  return {sum_psnr / dataset.camera_count(), n_l1 ? sum_l1 / static_cast<double>(n_l1) : 0.0};
}

struct Context {
  const SyntheticDataset& dataset;
  const EmbeddingOracle& oracle;
  const PipelineConfig& config;
  PipelineReport& report;
};

void run_fit(Context& ctx, StageReport& out) {
  const auto& ds = ctx.dataset;
  ctx.report.scene = initial_scene(ds, 0, ctx.config.init, ctx.oracle.embedding_dim(), ctx.config.seed,
                                   ctx.config.label_tolerance);
  auto frames = training_frames(ds, 0, ctx.config.fit_features ? &ctx.oracle : nullptr);
  for (Frame& f : frames) drop_feature_boundaries(f, ctx.config.feature_boundary_margin, ctx.config.part_edge_cosine);
  FitConfig fc = ctx.config.fit;
  fc.seed = ctx.config.seed;
  ctx.report.fit = fit(ctx.report.scene, frames, fc);
  const auto [view_psnr, view_l1] = view_quality(ctx.report.scene, ds, 0);
  const FitStats& st = ctx.report.fit;
  out.metrics = {{"primitives", static_cast<double>(ctx.report.scene.size())},
                 {"iterations", static_cast<double>(st.iterations)},
                 {"initial_loss", st.initial.total},
                 {"final_loss", st.final.total},
                 {"final_depth_l2", st.final.depth_l2},
                 {"final_color_l2", st.final.color_l2},
                 {"final_feature_object", st.final.feat_obj_cosine},
                 {"final_feature_part", st.final.feat_part_cosine},
                 {"train_psnr_db", view_psnr},
                 {"train_depth_l1_m", view_l1}};
}

void run_query(Context& ctx, StageReport& out) {
  const auto& ds = ctx.dataset;
  const auto& cfg = ctx.config;
  const std::string object_text =
      cfg.object_query.empty() ? ds.spec.objects.at(static_cast<std::size_t>(ds.options.moving_object)).label
                               : cfg.object_query;
  QuerySet q = cfg.query;
  q.positive = object_text;
  ctx.report.object = segment_object(ctx.report.scene, q, ctx.oracle, cfg.clustering);
  const SegmentResult& obj = *ctx.report.object;
  ctx.report.object_id = find_object(ds, object_text);
  out.metrics["object_above_threshold"] = static_cast<double>(obj.indices.size());
  out.metrics["object_selected"] = static_cast<double>(obj.cluster_kept.size());
  out.metrics["object_clusters"] = obj.cluster_count;
  if (ctx.report.object_id >= 0 && ctx.report.scene.has_labels()) {
    out.metrics["object_truth"] = static_cast<double>(ctx.report.scene.indices_with_label(ctx.report.object_id).size());
    out.metrics["object_iou"] = iou(obj.cluster_kept, ctx.report.scene.indices_with_label(ctx.report.object_id));
  }

  std::string part_text = cfg.part_query;
  if (part_text.empty() && ctx.report.object_id >= 0) {
    const ObjectSpec& spec = ds.spec.objects[static_cast<std::size_t>(ctx.report.object_id)];
    if (spec.part_count() > 1) part_text = spec.part_label(spec.part_count() - 1);
  }
  if (part_text.empty()) return;
  q.positive = part_text;
  ctx.report.part = segment_part(ctx.report.scene, obj, q, ctx.oracle, cfg.clustering);
  const SegmentResult& part = *ctx.report.part;
  ctx.report.part_id = find_part(ds, ctx.report.object_id, part_text);
  out.metrics["part_above_threshold"] = static_cast<double>(part.indices.size());
  out.metrics["part_selected"] = static_cast<double>(part.cluster_kept.size());
  out.metrics["part_clusters"] = part.cluster_count;
  if (ctx.report.part_id >= 0 && ctx.report.scene.has_labels())
    out.metrics["part_iou"] =
        iou(part.cluster_kept, ctx.report.scene.indices_with_label(ctx.report.object_id, ctx.report.part_id));
}

// Segmented object (or part) indices, falling back to ground-truth labels.
IndexSet target_indices(Context& ctx, bool prefer_part) {
  PipelineReport& r = ctx.report;
  if (!ctx.config.target.empty()) return ctx.config.target;
  if (prefer_part && r.part) return r.part->cluster_kept;
  if (r.object) return r.object->cluster_kept;
  const int object = ctx.dataset.options.moving_object;
  if (!r.scene.has_labels()) throw_precondition("no segmentation and no ground-truth labels to select the target");
  return r.scene.indices_with_label(object);
}

Vec3 camera_centroid(const SyntheticDataset& ds) {
  Vec3 c = Vec3::Zero();
  for (const auto& cam : ds.spec.cameras) c += cam.pose.translation;
  return c / static_cast<double>(ds.spec.cameras.size());
}

void run_grasp(Context& ctx, StageReport& out) {
  const IndexSet part = target_indices(ctx, true);
  GraspConfig gc = ctx.config.grasp;
  gc.seed = ctx.config.seed;
  if (gc.view_origin.isZero()) gc.view_origin = camera_centroid(ctx.dataset);
  ctx.report.grasp = sample_grasps(ctx.report.scene, part, ctx.config.gripper, gc);
  const GraspResult& g = *ctx.report.grasp;
  std::size_t valid = 0;
  for (const auto& c : g.candidates) valid += check_grasp(ctx.report.scene, part, ctx.config.gripper, c, gc.n_th).ok;
  out.metrics = {{"part_primitives", static_cast<double>(part.size())},
                 {"candidates", static_cast<double>(g.candidates.size())},
                 {"total_candidates", static_cast<double>(g.total_candidates)},
                 {"valid_fraction", g.candidates.empty() ? 1.0 : static_cast<double>(valid) / g.candidates.size()}};
  if (!g.candidates.empty()) out.metrics["top_score"] = g.candidates.front().score;
}

void run_track(Context& ctx, StageReport& out) {
  const auto& ds = ctx.dataset;
  if (ds.step_count() < 2) throw_precondition("dataset has no motion steps to track");
  const IndexSet object = target_indices(ctx, false);
  const int moving = ds.options.moving_object;

  TrackerGroundTruth truth{[&ds](int c, int s) -> const ImageD& { return ds.frame(c, s).true_depth; },
                           [&ds](int c, int s) -> const LabelImage& { return ds.frame(c, s).object_ids; },
                           [&ds](int o, int s) { return ds.motion.at(static_cast<std::size_t>(o)).at(static_cast<std::size_t>(s)); }};
  std::vector<std::unique_ptr<SyntheticTracker>> trackers;
  std::vector<TrackerOracle*> raw;
  for (int c = 0; c < ds.camera_count(); ++c) {
    SyntheticTrackerConfig tc = ctx.config.tracker;
    tc.pixel_sigma = ds.spec.noise.pixel_sigma;
    tc.outlier_fraction = ds.spec.noise.outlier_fraction;
    tc.seed = ctx.config.tracker.seed ^ (ctx.config.seed + static_cast<std::uint64_t>(c) * 0x9E3779B97F4A7C15ull);
    trackers.push_back(std::make_unique<SyntheticTracker>(c, ds.spec.cameras[static_cast<std::size_t>(c)], truth, tc));
    raw.push_back(trackers.back().get());
  }
  auto frames_at = [&ds](int s) {
    std::vector<TrackingFrame> frames;
    for (int c = 0; c < ds.camera_count(); ++c) {
      const SyntheticFrame& f = ds.frame(c, s);
      frames.push_back({OracleImage{f.color, c, s}, f.depth});
    }
    return frames;
  };
  TrackingConfig tcfg = ctx.config.tracking;
  tcfg.seed = ctx.config.seed;
  TrackingState state = init_tracking(ctx.report.scene, object, frames_at(0), ds.spec.cameras, raw, tcfg);
  RigidTransform total;
  int degenerate = 0;
  for (int s = 1; s < ds.step_count(); ++s) {
    ctx.report.track.push_back(track_step(ctx.report.scene, object, frames_at(s), state));
    total = ctx.report.track.back().total;
    degenerate += ctx.report.track.back().degenerate;
  }
  const RigidTransform& gt = ds.motion.at(static_cast<std::size_t>(moving)).back();
  const Vec3 center = ds.spec.objects.at(static_cast<std::size_t>(moving)).pose.translation;
  out.metrics = {{"steps", static_cast<double>(ds.step_count() - 1)},
                 {"degenerate_steps", degenerate},
                 {"refreshes", state.refreshes},
                 {"final_rotation_error_deg", rotation_angle_between(total.rotation, gt.rotation) * 180.0 / std::numbers::pi},
                 {"final_center_error_m", (total.apply(center) - gt.apply(center)).norm()}};
}

}  // namespace

PipelineReport run_pipeline(const SyntheticDataset& dataset, const EmbeddingOracle& oracle,
                            std::span<const Stage> stages, const PipelineConfig& config, const Scene* scene) {
  PipelineReport report;
  if (stages.empty()) return report;
  const bool fits = std::find(stages.begin(), stages.end(), Stage::Fit) != stages.end();
  if (!fits) {
    report.scene = scene ? *scene
                         : initial_scene(dataset, 0, config.init, oracle.embedding_dim(), config.seed,
                                         config.label_tolerance);
  }
  Context ctx{dataset, oracle, config, report};
  for (Stage stage : stages) {
    StageReport out;
    out.stage = stage;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      switch (stage) {
        case Stage::Fit: run_fit(ctx, out); break;
        case Stage::Query: run_query(ctx, out); break;
        case Stage::Grasp: run_grasp(ctx, out); break;
        case Stage::Track: run_track(ctx, out); break;
      }
    } catch (const Error& e) {
      throw Error(e.kind(), "stage " + to_string(stage) + ": " + e.what());
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.stages.push_back(std::move(out));
  }
  return report;
}

std::string report_json(const PipelineReport& report) {
  detail::json stages = detail::json::array();
  for (const auto& s : report.stages) {
    detail::json m = detail::json::object();
    for (const auto& [k, v] : s.metrics) m[k] = v;
    stages.push_back({{"stage", to_string(s.stage)}, {"seconds", s.seconds}, {"metrics", m}});
  }
  return detail::json{{"stages", stages}}.dump(2);
}

}  // namespace splatgrasp
