// splatgrasp command-line front end.
//
//   splatgrasp [--seed N] [--config FILE] [--threads N] <command> [options]
//
// Commands: generate, fit, render, query, grasp, track, pipeline, bench.
// Exit codes: 0 success, 2 invalid input or unreadable file, 3 numerical failure.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "splatgrasp/grasp_check.hpp"
#include "splatgrasp/io.hpp"
#include "splatgrasp/oracles.hpp"
#include "splatgrasp/pipeline.hpp"
#include "splatgrasp/rasterizer.hpp"

namespace sg = splatgrasp;
using nlohmann::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, sep);)
    if (!item.empty()) out.push_back(item);
  return out;
}

sg::Vec3 parse_vec3(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) sg::throw_precondition("expected x,y,z but got \"" + text + "\"");
  try {
    return {std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2])};
  } catch (const std::exception&) {
    sg::throw_precondition("expected x,y,z but got \"" + text + "\"");
  }
}

void write_text(const sg::fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) sg::throw_io("cannot write " + path.string());
  out << text << "\n";
}

json read_json(const sg::fs::path& path) {
  std::ifstream in(path);
  if (!in) sg::throw_io("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    sg::throw_io(path.string() + ": " + e.what());
  }
}

// "synthetic:<embedding seed>" or "precomputed:<dir>". The synthetic oracle reads the
// dataset's ground-truth maps, so it needs the dataset in memory.
struct OracleOptions {
  std::string spec = "synthetic:0";
  double noise = 0.05;
};

std::unique_ptr<sg::EmbeddingOracle> make_oracle(const OracleOptions& o, const sg::SyntheticDataset* dataset,
                                                 std::uint64_t seed) {
  const auto colon = o.spec.find(':');
  const std::string kind = o.spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : o.spec.substr(colon + 1);
  if (kind == "precomputed") {
    if (arg.empty()) sg::throw_precondition("--oracle precomputed:<dir> needs a directory");
    return std::make_unique<sg::PrecomputedOracle>(arg);
  }
  if (kind != "synthetic") sg::throw_precondition("--oracle must be synthetic:<seed> or precomputed:<dir>");
  if (!dataset) sg::throw_precondition("the synthetic oracle needs --data");
  sg::SyntheticOracleConfig cfg;
  try {
    cfg.embedding_seed = arg.empty() ? 0 : std::stoull(arg);
  } catch (const std::exception&) {
    sg::throw_precondition("bad synthetic oracle seed \"" + arg + "\"");
  }
  cfg.noise_sigma = o.noise;
  cfg.noise_seed = seed;
  return std::make_unique<sg::SyntheticEmbeddingOracle>(*dataset, cfg);
}

void add_oracle_options(CLI::App* cmd, OracleOptions& o) {
  cmd->add_option("--oracle", o.spec, "synthetic:<embedding seed> or precomputed:<dir>")->capture_default_str();
  cmd->add_option("--oracle-noise", o.noise, "Synthetic oracle noise (norm per pixel)")->capture_default_str();
}

json segment_json(const sg::SegmentResult& r) {
  return {{"indices", r.indices},   {"scores", r.scores}, {"cluster_kept", r.cluster_kept},
          {"clusters", r.cluster_count}, {"eps", r.eps}};
}

// Part cluster when present (grasp) and requested, else object cluster.
sg::IndexSet indices_from_json(const json& j, bool prefer_part) {
  try {
    if (prefer_part && j.contains("part")) return j.at("part").at("cluster_kept").get<sg::IndexSet>();
    return j.at("object").at("cluster_kept").get<sg::IndexSet>();
  } catch (const json::exception& e) {
    sg::throw_io(std::string("indices file: ") + e.what());
  }
}

json candidate_json(const sg::GraspCandidate& c) {
  json pose = json::array();
  const sg::Mat4 m = c.pose.matrix();
  for (int r = 0; r < 4; ++r) pose.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
  return {{"pose", pose},
          {"contact_offset", c.contact_offset},
          {"enclosed_count", c.enclosed_count},
          {"score", c.score},
          {"antipodality", c.antipodality},
          {"collision_margin", c.collision_margin},
          {"sample", c.sample},
          {"y_index", c.y_index},
          {"phi_index", c.phi_index}};
}

// ---------------------------------------------------------------------------------------

struct GenerateArgs {
  std::string scene = "reference";
  int cameras = 6, width = 80, height = 60, steps = 0, moving = 0;
  std::string motion = "static";
  double depth_noise = 0, pixel_noise = 0, outliers = 0;
  std::string out, oracle_out;
  OracleOptions oracle;
};

int run_generate(const GenerateArgs& a, const Globals& g) {
  sg::SyntheticSceneSpec spec = sg::named_scene(a.scene, a.cameras, a.width, a.height, g.seed);
  spec.noise = {a.depth_noise, a.pixel_noise, a.outliers};
  sg::GenerateOptions opts{a.steps, sg::parse_motion(a.motion), a.moving};
  const sg::SyntheticDataset ds = sg::generate(spec, opts);
  sg::write_dataset(a.out, ds);
  if (!a.oracle_out.empty()) {
    const auto oracle = make_oracle(a.oracle, &ds, g.seed);
    std::vector<std::string> texts{"objects", "things", "background"};
    for (const auto& o : spec.objects) texts.push_back(o.label);
    for (const auto& p : ds.parts) texts.push_back(p.label);
    std::sort(texts.begin(), texts.end());
    texts.erase(std::unique(texts.begin(), texts.end()), texts.end());
    sg::export_oracle(a.oracle_out, *oracle, ds, texts);
  }
  std::cout << "wrote " << ds.frames.size() << " frames (" << ds.camera_count() << " cameras, " << ds.step_count()
            << " steps) to " << a.out << "\n";
  return 0;
}

struct FitArgs {
  std::string data, out, trace;
  OracleOptions oracle;
  int iterations = 3000, feature_samples = 512, stride = 2;
  bool no_features = false;
};

int run_fit(const FitArgs& a, const Globals& g) {
  const sg::SyntheticDataset ds = sg::read_dataset(a.data);
  const auto oracle = make_oracle(a.oracle, &ds, g.seed);
  sg::PipelineConfig cfg;
  cfg.seed = g.seed;
  cfg.init.stride = a.stride;
  cfg.fit.iterations = a.iterations;
  cfg.fit.feature_samples = a.feature_samples;
  cfg.fit_features = !a.no_features;
  const sg::Stage stages[] = {sg::Stage::Fit};
  const sg::PipelineReport r = sg::run_pipeline(ds, *oracle, stages, cfg);
  sg::write_scene(a.out, r.scene);
  if (!a.trace.empty()) {
    std::ofstream out(a.trace);
    if (!out) sg::throw_io("cannot write " + a.trace);
    out << "iteration,color_l2,depth_l2,feature_object,feature_part,total\n" << std::setprecision(9);
    for (std::size_t i = 0; i < r.fit.trace.size(); ++i) {
      const auto& l = r.fit.trace[i];
      out << i << ',' << l.color_l2 << ',' << l.depth_l2 << ',' << l.feat_obj_cosine << ',' << l.feat_part_cosine
          << ',' << l.total << '\n';
    }
  }
  std::cout << sg::report_json(r) << "\n";
  return 0;
}

struct RenderArgs {
  std::string scene, data, out;
  int camera = 0;
};

int run_render(const RenderArgs& a, const Globals&) {
  const sg::Scene scene = sg::read_scene(a.scene);
  const sg::SyntheticDataset ds = sg::read_dataset(a.data);
  if (a.camera < 0 || a.camera >= ds.camera_count()) sg::throw_precondition("--camera out of range");
  const sg::RenderedBuffers r =
      sg::render(scene, ds.spec.cameras[static_cast<std::size_t>(a.camera)], sg::kChannelDepth | sg::kChannelColor);
  sg::ImageD depth(r.width, r.height, 1, 0.0);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      if (r.alpha(x, y) > 0.5) depth(x, y) = r.depth(x, y) / r.alpha(x, y);
  sg::write_png(a.out + ".color.png", r.color);
  sg::write_pfm(a.out + ".depth.pfm", depth);
  std::cout << "wrote " << a.out << ".color.png and " << a.out << ".depth.pfm\n";
  return 0;
}

struct QueryArgs {
  std::string scene, data, out, positive, part, negatives = "objects,things";
  OracleOptions oracle;
  double tau = 0.6, temperature = 0.1, eps = 0.0, eps_scale = 4.0;
  int min_pts = 10;
  bool largest = false;
};

int run_query(const QueryArgs& a, const Globals& g) {
  const sg::Scene scene = sg::read_scene(a.scene);
  std::optional<sg::SyntheticDataset> ds;
  if (!a.data.empty()) ds = sg::read_dataset(a.data);
  const auto oracle = make_oracle(a.oracle, ds ? &*ds : nullptr, g.seed);
  sg::QuerySet q;
  q.positive = a.positive;
  q.negatives = split(a.negatives, ',');
  q.threshold = a.tau;
  q.temperature = a.temperature;
  const sg::ClusterOptions cluster{a.eps, a.eps_scale, a.min_pts, a.largest};
  const sg::SegmentResult obj = sg::segment_object(scene, q, *oracle, cluster);
  json out{{"object", segment_json(obj)}};
  out["object"]["query"] = a.positive;
  if (!a.part.empty()) {
    q.positive = a.part;
    const sg::SegmentResult part = sg::segment_part(scene, obj, q, *oracle, cluster);
    out["part"] = segment_json(part);
    out["part"]["query"] = a.part;
  }
  if (!a.out.empty()) write_text(a.out, out.dump(2));
  std::cout << "object: " << obj.cluster_kept.size() << " primitives in " << obj.cluster_count << " clusters";
  if (out.contains("part")) std::cout << ", part: " << out["part"]["cluster_kept"].size() << " primitives";
  std::cout << "\n";
  return 0;
}

struct GraspArgs {
  std::string scene, indices, out, ply, view_origin;
  int samples = 64, top_k = 5, n_th = 10;
  double radius = 0.02;
};

int run_grasp(const GraspArgs& a, const Globals& g) {
  const sg::Scene scene = sg::read_scene(a.scene);
  const sg::IndexSet part = indices_from_json(read_json(a.indices), true);
  sg::GraspConfig cfg;
  cfg.samples = a.samples;
  cfg.top_k = a.top_k;
  cfg.n_th = a.n_th;
  cfg.neighborhood_radius = a.radius;
  cfg.seed = g.seed;
  if (!a.view_origin.empty()) {
    cfg.view_origin = parse_vec3(a.view_origin);
  } else {
    sg::Vec3 c = sg::Vec3::Zero();
    for (sg::Index i : part) c += scene.primitives.at(i).center;
    cfg.view_origin = c / std::max<double>(1.0, static_cast<double>(part.size())) + sg::Vec3(0, 0, 0.5);
  }
  const sg::GripperModel gripper;
  const auto t0 = std::chrono::steady_clock::now();
  const sg::GraspResult r = sg::sample_grasps(scene, part, gripper, cfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json cands = json::array();
  int valid = 0;
  for (const auto& c : r.candidates) {
    cands.push_back(candidate_json(c));
    valid += sg::check_grasp(scene, part, gripper, c, cfg.n_th).ok;
  }
  const json out{{"candidates", cands},
                 {"total_candidates", r.total_candidates},
                 {"validated", valid},
                 {"seconds", seconds},
                 {"diagnostics", r.diagnostics.summary()}};
  if (!a.out.empty()) write_text(a.out, out.dump(2));
  if (!a.ply.empty()) {
    std::ofstream ply(a.ply);
    if (!ply) sg::throw_io("cannot write " + a.ply);
    sg::write_gripper_ply(ply, r.candidates, gripper);
  }
  std::cout << r.candidates.size() << " candidates (" << valid << " validated) of " << r.total_candidates << " in "
            << seconds << " s\n"
            << r.diagnostics.summary() << "\n";
  return 0;
}

struct TrackArgs {
  std::string data, scene, indices, out;
  int keypoints = 64, refresh = 10;
  double occlusion = 0.0;
  std::string occlusion_window;
};

int run_track(const TrackArgs& a, const Globals& g) {
  const sg::SyntheticDataset ds = sg::read_dataset(a.data);
  sg::PipelineConfig cfg;
  cfg.seed = g.seed;
  cfg.tracking.keypoints = a.keypoints;
  cfg.tracking.refresh_interval = a.refresh;
  cfg.tracker.occlusion_fraction = a.occlusion;
  cfg.tracker.seed = g.seed;
  if (!a.occlusion_window.empty()) {
    const auto w = split(a.occlusion_window, ',');
    if (w.size() != 2) sg::throw_precondition("--occlusion-window expects begin,end");
    cfg.tracker.occlusion_begin = std::stoi(w[0]);
    cfg.tracker.occlusion_end = std::stoi(w[1]);
  }
  if (!a.indices.empty()) cfg.target = indices_from_json(read_json(a.indices), false);
  std::optional<sg::Scene> scene;
  if (!a.scene.empty()) scene = sg::read_scene(a.scene);
  // Tracking never consults the embedding oracle.
  const sg::SyntheticEmbeddingOracle oracle(ds);
  const sg::Stage stages[] = {sg::Stage::Track};
  const sg::PipelineReport r = sg::run_pipeline(ds, oracle, stages, cfg, scene ? &*scene : nullptr);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) sg::throw_io("cannot write " + a.out);
    os = &file;
  }
  *os << "step";
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) *os << ",m" << i << j;
  *os << ",inliers,outliers_rejected,status\n" << std::setprecision(12);
  for (std::size_t s = 0; s < r.track.size(); ++s) {
    const auto& t = r.track[s];
    const sg::Mat4 m = t.total.matrix();
    *os << s + 1;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) *os << ',' << m(i, j);
    *os << ',' << t.inliers << ',' << t.outliers_rejected << ',' << t.status << '\n';
  }
  if (!a.out.empty()) std::cout << sg::report_json(r) << "\n";
  return 0;
}

struct PipelineArgs {
  std::string data, stages = "fit,query,grasp,track", out, scene_out, object, part;
  OracleOptions oracle;
  int iterations = 3000;
};

int run_pipeline_cmd(const PipelineArgs& a, const Globals& g) {
  const sg::SyntheticDataset ds = sg::read_dataset(a.data);
  const auto oracle = make_oracle(a.oracle, &ds, g.seed);
  std::vector<sg::Stage> stages;
  for (const auto& s : split(a.stages, ',')) stages.push_back(sg::parse_stage(s));
  sg::PipelineConfig cfg;
  cfg.seed = g.seed;
  cfg.fit.iterations = a.iterations;
  cfg.object_query = a.object;
  cfg.part_query = a.part;
  cfg.tracker.seed = g.seed;
  const sg::PipelineReport r = sg::run_pipeline(ds, *oracle, stages, cfg);
  const std::string report = sg::report_json(r);
  if (!a.out.empty()) write_text(a.out, report);
  if (!a.scene_out.empty() && !r.stages.empty()) sg::write_scene(a.scene_out, r.scene);
  std::cout << report << "\n";
  return 0;
}

struct BenchArgs {
  int primitives = 100000;
  std::string out;
};

// Grasp latency on a dense tabletop reconstruction (mug as the part) and render latency.
int run_bench(const BenchArgs& a, const Globals& g) {
  if (a.primitives <= 0) sg::throw_precondition("--primitives must be positive");
  sg::Scene scene;
  int width = 80;
  for (;; width *= 2) {
    const sg::SyntheticDataset ds = sg::generate(sg::named_scene("tabletop", 6, width, width * 3 / 4, g.seed));
    scene = sg::initial_scene(ds, 0, sg::BackprojectOptions{.stride = 1}, 8, g.seed);
    if (scene.size() >= static_cast<sg::Index>(a.primitives) || width > 4096) break;
  }
  if (scene.size() > static_cast<sg::Index>(a.primitives)) {
    std::vector<sg::Index> keep(scene.size());
    std::iota(keep.begin(), keep.end(), sg::Index{0});
    std::mt19937_64 rng(g.seed);
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(static_cast<std::size_t>(a.primitives));
    std::sort(keep.begin(), keep.end());
    sg::Scene sub;
    sub.decoder = scene.decoder;
    for (sg::Index i : keep) {
      sub.primitives.push_back(scene.primitives[i]);
      sub.labels.push_back(scene.labels[i]);
    }
    scene = std::move(sub);
  }
  const sg::IndexSet part = scene.indices_with_label(0);
  sg::GraspConfig cfg;
  cfg.seed = g.seed;
  cfg.view_origin = sg::Vec3(0, 0, 0.5);
  const auto t0 = std::chrono::steady_clock::now();
  const sg::GraspResult r = sg::sample_grasps(scene, part, sg::GripperModel{}, cfg);
  const double grasp_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const sg::Camera cam = sg::ring_cameras(1, sg::Vec3(0, 0, 0.04), 0.35, 0.55, 320, 240, 352)[0];
  const auto t1 = std::chrono::steady_clock::now();
  (void)sg::render(scene, cam, sg::kChannelDepth | sg::kChannelColor);
  const double render_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  const json out{{"primitives", scene.size()},         {"part_primitives", part.size()},
                 {"grasp_seconds", grasp_s},            {"grasp_candidates", r.total_candidates},
                 {"render_320x240_seconds", render_s},  {"threads", sg::thread_count()}};
  if (!a.out.empty()) write_text(a.out, out.dump(2));
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-splat scene fitting, language queries, grasp sampling and object tracking"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value configuration file (INI or TOML sections per command)");
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Write a synthetic RGB-D dataset with ground truth");
  gen->add_option("--scene", ga.scene, "reference, tabletop, mug, box, sphere, plate or tracking")->capture_default_str();
  gen->add_option("--cameras", ga.cameras)->capture_default_str();
  gen->add_option("--width", ga.width)->capture_default_str();
  gen->add_option("--height", ga.height)->capture_default_str();
  gen->add_option("--steps", ga.steps, "Motion steps after step 0")->capture_default_str();
  gen->add_option("--motion", ga.motion, "static, easy, medium or hard")->capture_default_str();
  gen->add_option("--moving-object", ga.moving)->capture_default_str();
  gen->add_option("--depth-noise", ga.depth_noise, "Depth sigma, metres")->capture_default_str();
  gen->add_option("--pixel-noise", ga.pixel_noise, "Tracker sigma, pixels")->capture_default_str();
  gen->add_option("--outliers", ga.outliers, "Tracker outlier fraction")->capture_default_str();
  gen->add_option("--out", ga.out, "Dataset directory")->required();
  gen->add_option("--oracle-out", ga.oracle_out, "Also export synthetic oracle answers here");
  add_oracle_options(gen, ga.oracle);

  FitArgs fa;
  auto* fitc = app.add_subcommand("fit", "Depth-initialise and optimise a scene");
  fitc->add_option("--data", fa.data)->required();
  fitc->add_option("--out", fa.out, "Output .gsplat")->required();
  fitc->add_option("--trace", fa.trace, "Per-iteration loss CSV");
  fitc->add_option("--iterations", fa.iterations)->capture_default_str();
  fitc->add_option("--feature-samples", fa.feature_samples)->capture_default_str();
  fitc->add_option("--stride", fa.stride, "Back-projection pixel stride")->capture_default_str();
  fitc->add_flag("--no-features", fa.no_features, "Fit colour and depth only");
  add_oracle_options(fitc, fa.oracle);

  RenderArgs ra;
  auto* rend = app.add_subcommand("render", "Render a scene from a dataset camera");
  rend->add_option("--scene", ra.scene)->required();
  rend->add_option("--data", ra.data)->required();
  rend->add_option("--camera", ra.camera)->capture_default_str();
  rend->add_option("--out", ra.out, "Output prefix")->required();

  QueryArgs qa;
  auto* query = app.add_subcommand("query", "Segment primitives by text");
  query->add_option("--scene", qa.scene)->required();
  query->add_option("--data", qa.data, "Dataset (needed by the synthetic oracle)");
  query->add_option("--positive", qa.positive)->required();
  query->add_option("--negatives", qa.negatives, "Comma-separated")->capture_default_str();
  query->add_option("--part", qa.part, "Part query within the object");
  query->add_option("--tau", qa.tau)->capture_default_str();
  query->add_option("--temperature", qa.temperature)->capture_default_str();
  query->add_option("--eps", qa.eps, "DBSCAN radius; 0 derives it")->capture_default_str();
  query->add_option("--eps-scale", qa.eps_scale, "Multiple of the median neighbour distance")->capture_default_str();
  query->add_option("--min-pts", qa.min_pts)->capture_default_str();
  query->add_flag("--largest-cluster", qa.largest);
  query->add_option("--out", qa.out, "Indices JSON");
  add_oracle_options(query, qa.oracle);

  GraspArgs gra;
  auto* grasp = app.add_subcommand("grasp", "Sample grasps on a segmented part");
  grasp->add_option("--scene", gra.scene)->required();
  grasp->add_option("--indices", gra.indices, "Query output; the part is used when present")->required();
  grasp->add_option("--samples", gra.samples)->capture_default_str();
  grasp->add_option("--top-k", gra.top_k)->capture_default_str();
  grasp->add_option("--n-th", gra.n_th)->capture_default_str();
  grasp->add_option("--radius", gra.radius, "Neighbourhood radius, metres")->capture_default_str();
  grasp->add_option("--view-origin", gra.view_origin, "x,y,z; default 0.5 m above the part");
  grasp->add_option("--out", gra.out, "Candidates JSON");
  grasp->add_option("--ply", gra.ply, "Gripper meshes at the candidates");

  TrackArgs ta;
  auto* track = app.add_subcommand("track", "Track an object through a dataset sequence");
  track->add_option("--data", ta.data)->required();
  track->add_option("--scene", ta.scene, "Scene to move; default is back-projected from step 0");
  track->add_option("--indices", ta.indices, "Query output; default is the moving object's labels");
  track->add_option("--keypoints", ta.keypoints)->capture_default_str();
  track->add_option("--refresh", ta.refresh, "Reference refresh interval")->capture_default_str();
  track->add_option("--occlusion", ta.occlusion, "Fraction of tracks hidden in the window")->capture_default_str();
  track->add_option("--occlusion-window", ta.occlusion_window, "begin,end steps");
  track->add_option("--out", ta.out, "Per-step CSV (stdout when omitted)");

  PipelineArgs pa;
  auto* pipe = app.add_subcommand("pipeline", "Run fit, query, grasp and track with metrics");
  pipe->add_option("--data", pa.data)->required();
  pipe->add_option("--stages", pa.stages)->capture_default_str();
  pipe->add_option("--iterations", pa.iterations)->capture_default_str();
  pipe->add_option("--object", pa.object, "Object query; default is the moving object");
  pipe->add_option("--part", pa.part, "Part query; default is the object's last part");
  pipe->add_option("--out", pa.out, "Metrics JSON");
  pipe->add_option("--scene-out", pa.scene_out, "Final scene .gsplat");
  add_oracle_options(pipe, pa.oracle);

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "Grasp and render latency on a large scene");
  bench->add_option("--primitives", ba.primitives)->capture_default_str();
  bench->add_option("--out", ba.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    sg::set_thread_count(g.threads);
    if (*gen) return run_generate(ga, g);
    if (*fitc) return run_fit(fa, g);
    if (*rend) return run_render(ra, g);
    if (*query) return run_query(qa, g);
    if (*grasp) return run_grasp(gra, g);
    if (*track) return run_track(ta, g);
    if (*pipe) return run_pipeline_cmd(pa, g);
    if (*bench) return run_bench(ba, g);
  } catch (const sg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == sg::ErrorKind::Numerical ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
