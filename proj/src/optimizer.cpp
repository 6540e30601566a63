#include "splatgrasp/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "splatgrasp/detail/raster.hpp"

namespace splatgrasp {

namespace {

// Per-splat attribute layout used for training renders.
constexpr int kDepthCh = 0;
constexpr int kColorCh = 1;
constexpr int kLatentCh = 4;
constexpr int kTrainChannels = 4 + kLatentDim;
constexpr int kGeometryChannels = 4;  // frames without feature targets skip the latents

constexpr std::size_t kDecodeChunk = 1024;

struct LossGrad {
  std::vector<double> pixel;  // pixels * channels
  DecoderWeights decoder;
};

bool valid_depth(double d) { return std::isfinite(d) && d > 0.0; }

void check_shapes(const RenderedBuffers& r, const Frame& f, const DecoderWeights& dec) {
  const int w = r.width;
  const int h = r.height;
  if (f.color.width() != w || f.color.height() != h || f.color.channels() != 3)
    throw_precondition("loss: target colour must be RGB of the rendered size");
  if (r.color.width() != w || r.depth.width() != w || r.feature.width() != w)
    throw_precondition("loss: rendered buffers must include depth, colour and feature");
  if (!f.depth.empty() && (f.depth.width() != w || f.depth.height() != h))
    throw_precondition("loss: target depth size differs from the rendered size");
  for (const FeatureMap* m : {&f.f_obj, &f.f_part}) {
    if (m->empty()) continue;
    if (m->width() != w || m->height() != h) throw_precondition("loss: feature map size differs from the rendered size");
    if (m->channels() != dec.output_dim()) throw_precondition("loss: feature map channels differ from decoder output");
  }
  if (!f.loss_mask.empty() && (f.loss_mask.width() != w || f.loss_mask.height() != h))
    throw_precondition("loss: loss mask size differs from the rendered size");
}

// 1 - cos(y, t) and, when `grad` is set, its gradient with respect to y scaled by `scale`.
double cosine_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& t, double scale, Eigen::Ref<Eigen::VectorXd> grad,
                   bool want_grad) {
  const double ny = y.norm();
  const double nt = t.norm();
  if (ny == 0.0 || nt == 0.0) {
    if (want_grad) grad.setZero();
    return 1.0;
  }
  const double cos = y.dot(t) / (ny * nt);
  if (want_grad) grad = -scale * (t / (ny * nt) - cos * y / (ny * ny));
  return 1.0 - cos;
}

LossReport loss_impl(const RenderedBuffers& r, const Frame& f, const DecoderWeights& dec, const LossWeights& weights,
                     std::span<const std::size_t> feature_pixels, LossGrad* grad, int channels_out) {
  check_shapes(r, f, dec);
  const int w = r.width;
  const std::size_t pixels = static_cast<std::size_t>(w) * r.height;
  auto in_mask = [&](std::size_t pix) {
    return f.loss_mask.empty() || f.loss_mask.data()[pix] != 0;
  };
  if (grad) {
    grad->pixel.assign(pixels * channels_out, 0.0);
    grad->decoder = DecoderWeights::zeros(dec.output_dim(), dec.hidden_dim());
    grad->decoder.activation = dec.activation;
  }

  LossReport rep;
  std::size_t n_color = 0;
  std::size_t n_depth = 0;
  for (std::size_t pix = 0; pix < pixels; ++pix) {
    if (!in_mask(pix)) continue;
    ++n_color;
    if (!f.depth.empty() && valid_depth(f.depth.data()[pix])) ++n_depth;
  }
  if (n_color == 0) throw_precondition("loss: no valid pixel");

  const double color_norm = 1.0 / (3.0 * static_cast<double>(n_color));
  const double depth_norm = n_depth ? 1.0 / static_cast<double>(n_depth) : 0.0;
  for (std::size_t pix = 0; pix < pixels; ++pix) {
    if (!in_mask(pix)) continue;
    double* g = grad ? grad->pixel.data() + pix * channels_out : nullptr;
    for (int c = 0; c < 3; ++c) {
      const double e = r.color.data()[pix * 3 + c] - f.color.data()[pix * 3 + c];
      rep.color_l2 += e * e * color_norm;
      if (g) g[kColorCh + c] = weights.color * 2.0 * e * color_norm;
    }
    if (!f.depth.empty() && valid_depth(f.depth.data()[pix])) {
      const double e = r.depth.data()[pix] - f.depth.data()[pix];
      rep.depth_l2 += e * e * depth_norm;
      if (g) g[kDepthCh] = weights.depth * 2.0 * e * depth_norm;
    }
  }

  // Feature terms over assigned pixels (optionally a caller-chosen subset).
  const bool has_obj = !f.f_obj.empty();
  const bool has_part = !f.f_part.empty();
  if (has_obj || has_part) {
    std::vector<std::size_t> ids;
    auto consider = [&](std::size_t pix) {
      if (pix >= pixels || !in_mask(pix)) return;
      const int x = static_cast<int>(pix % w);
      const int y = static_cast<int>(pix / w);
      if ((has_obj && f.f_obj.assigned(x, y)) || (has_part && f.f_part.assigned(x, y))) ids.push_back(pix);
    };
    if (feature_pixels.empty()) {
      for (std::size_t pix = 0; pix < pixels; ++pix) consider(pix);
    } else {
      for (std::size_t pix : feature_pixels) consider(pix);
    }
    std::size_t n_obj = 0;
    std::size_t n_part = 0;
    for (std::size_t pix : ids) {
      const int x = static_cast<int>(pix % w);
      const int y = static_cast<int>(pix / w);
      if (has_obj && f.f_obj.assigned(x, y)) ++n_obj;
      if (has_part && f.f_part.assigned(x, y)) ++n_part;
    }
    const double obj_scale = n_obj ? weights.feature / static_cast<double>(n_obj) : 0.0;
    const double part_scale = n_part ? weights.feature * weights.part_lambda / static_cast<double>(n_part) : 0.0;
    const int channels = dec.output_dim();
    double sum_obj = 0.0;
    double sum_part = 0.0;

    for (std::size_t begin = 0; begin < ids.size(); begin += kDecodeChunk) {
      const std::size_t m = std::min(kDecodeChunk, ids.size() - begin);
      Eigen::MatrixXd x_in(kLatentDim, static_cast<Eigen::Index>(m));
      for (std::size_t j = 0; j < m; ++j)
        for (int c = 0; c < kLatentDim; ++c) x_in(c, j) = r.feature.data()[ids[begin + j] * kLatentDim + c];
      const DecodedBatch d = decode(x_in, dec);
      Eigen::MatrixXd g_obj = Eigen::MatrixXd::Zero(channels, static_cast<Eigen::Index>(m));
      Eigen::MatrixXd g_part = Eigen::MatrixXd::Zero(channels, static_cast<Eigen::Index>(m));
      Eigen::VectorXd t(channels);
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t pix = ids[begin + j];
        const int x = static_cast<int>(pix % w);
        const int y = static_cast<int>(pix / w);
        if (has_obj && f.f_obj.assigned(x, y)) {
          t = f.f_obj.at(x, y).cast<double>();
          sum_obj += cosine_loss(d.obj.col(j), t, obj_scale, g_obj.col(j), grad != nullptr);
        }
        if (has_part && f.f_part.assigned(x, y)) {
          t = f.f_part.at(x, y).cast<double>();
          sum_part += cosine_loss(d.part.col(j), t, part_scale, g_part.col(j), grad != nullptr);
        }
      }
      if (!grad) continue;
      DecoderWeights& gd = grad->decoder;
      gd.obj_w.noalias() += g_obj * d.hidden.transpose();
      gd.obj_b += g_obj.rowwise().sum();
      gd.part_w.noalias() += g_part * d.hidden.transpose();
      gd.part_b += g_part.rowwise().sum();
      Eigen::MatrixXd g_pre = dec.obj_w.transpose() * g_obj + dec.part_w.transpose() * g_part;
      if (dec.activation == Activation::Tanh) g_pre.array() *= 1.0 - d.hidden.array().square();
      gd.trunk_w.noalias() += g_pre * x_in.transpose();
      gd.trunk_b += g_pre.rowwise().sum();
      const Eigen::MatrixXd g_x = dec.trunk_w.transpose() * g_pre;
      for (std::size_t j = 0; j < m; ++j)
        for (int c = 0; c < kLatentDim; ++c) grad->pixel[ids[begin + j] * channels_out + kLatentCh + c] = g_x(c, j);
    }
    rep.feat_obj_cosine = n_obj ? sum_obj / static_cast<double>(n_obj) : 0.0;
    rep.feat_part_cosine = n_part ? sum_part / static_cast<double>(n_part) : 0.0;
  }

  rep.total = weights.color * rep.color_l2 + weights.depth * rep.depth_l2 +
              weights.feature * (rep.feat_obj_cosine + weights.part_lambda * rep.feat_part_cosine);
  return rep;
}

// d(R(q))/dq for a unit quaternion, contracted with dL/dR.
Vec4 rotation_backward(const Quat& q, const Mat3& g) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 d;
  d[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                w * g(2, 1) - 2.0 * x * g(2, 2));
  d[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                z * g(2, 1) - 2.0 * y * g(2, 2));
  d[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2) +
                x * g(2, 0) + y * g(2, 1));
  return d;
}

RenderedBuffers buffers_from_state(const detail::RasterPlan& plan, const detail::CompositeState& st, int ch) {
  RenderedBuffers r;
  r.width = plan.width;
  r.height = plan.height;
  r.depth = ImageD(plan.width, plan.height, 1);
  r.color = ImageD(plan.width, plan.height, 3);
  r.feature = ImageD(plan.width, plan.height, kLatentDim);
  r.alpha = ImageD(plan.width, plan.height, 1);
  r.contrib_count = LabelImage(plan.width, plan.height, 1);
  const std::size_t pixels = static_cast<std::size_t>(plan.width) * plan.height;
  for (std::size_t pix = 0; pix < pixels; ++pix) {
    const double* v = st.output.data() + pix * ch;
    r.depth.data()[pix] = v[kDepthCh];
    for (int c = 0; c < 3; ++c) r.color.data()[pix * 3 + c] = v[kColorCh + c];
    if (ch == kTrainChannels)
      for (int c = 0; c < kLatentDim; ++c) r.feature.data()[pix * kLatentDim + c] = v[kLatentCh + c];
    r.alpha.data()[pix] = 1.0 - st.final_transmittance[pix];
    r.contrib_count.data()[pix] = st.contributors[pix];
  }
  return r;
}

}  // namespace

double opacity_to_logit(double opacity) {
  const double o = std::clamp(opacity, kMinOpacity, kMaxOpacity);
  return std::log(o / (1.0 - o));
}

double logit_to_opacity(double logit) {
  const double bound = std::log(kMaxOpacity / kMinOpacity);
  const double l = std::clamp(logit, -bound, bound);
  return 1.0 / (1.0 + std::exp(-l));
}

LossReport compute_losses(const RenderedBuffers& rendered, const Frame& target, const DecoderWeights& decoder,
                          const LossWeights& weights, std::span<const std::size_t> feature_pixels) {
  return loss_impl(rendered, target, decoder, weights, feature_pixels, nullptr, kTrainChannels);
}

SceneGradients SceneGradients::zeros(const Scene& scene) {
  const auto n = static_cast<Eigen::Index>(scene.size());
  SceneGradients g;
  g.center = Eigen::MatrixXd::Zero(n, 3);
  g.rotation = Eigen::MatrixXd::Zero(n, 4);
  g.log_scale = Eigen::MatrixXd::Zero(n, 3);
  g.opacity_logit = Eigen::VectorXd::Zero(n);
  g.color = Eigen::MatrixXd::Zero(n, 3);
  g.latent = Eigen::MatrixXd::Zero(n, kLatentDim);
  g.decoder = DecoderWeights::zeros(scene.decoder.output_dim(), scene.decoder.hidden_dim());
  return g;
}

GradientResult gradients(const Scene& scene, const Frame& frame, const LossWeights& weights,
                         std::span<const std::size_t> feature_pixels) {
  if (scene.primitives.empty()) throw_precondition("gradients: empty scene");
  const detail::RasterPlan plan = detail::build_plan(scene, frame.camera);
  const std::size_t n_splats = plan.splats.size();
  const int ch = frame.f_obj.empty() && frame.f_part.empty() ? kGeometryChannels : kTrainChannels;
  std::vector<double> attrs(n_splats * ch);
  for (std::size_t k = 0; k < n_splats; ++k) {
    const GaussianPrimitive& p = scene.primitives[plan.splats[k].index];
    double* a = attrs.data() + k * ch;
    a[kDepthCh] = plan.splats[k].splat.view_depth;
    for (int c = 0; c < 3; ++c) a[kColorCh + c] = p.color[c];
    if (ch == kTrainChannels)
      for (int c = 0; c < kLatentDim; ++c) a[kLatentCh + c] = p.feature_latent[c];
  }
  const detail::CompositeState st = detail::composite(plan, attrs, ch);
  const RenderedBuffers rendered = buffers_from_state(plan, st, ch);

  GradientResult out;
  LossGrad lg;
  out.loss = loss_impl(rendered, frame, scene.decoder, weights, feature_pixels, &lg, ch);
  out.grad = SceneGradients::zeros(scene);
  out.grad.decoder = std::move(lg.decoder);

  const detail::SplatGradients sg = detail::composite_backward(plan, attrs, ch, st, lg.pixel);
  const Camera& cam = frame.camera;
  const Mat3 cam_to_world = cam.pose.rotation;
  const Mat3 world_to_cam = cam_to_world.transpose();

  for (std::size_t k = 0; k < n_splats; ++k) {
    const detail::ProjectedPrimitive& s = plan.splats[k];
    const GaussianPrimitive& p = scene.primitives[s.index];
    const auto i = static_cast<Eigen::Index>(s.index);
    const double* ga = sg.attrs.data() + k * ch;
    for (int c = 0; c < 3; ++c) out.grad.color(i, c) = ga[kColorCh + c];
    if (ch == kTrainChannels)
      for (int c = 0; c < kLatentDim; ++c) out.grad.latent(i, c) = ga[kLatentCh + c];

    // Opacity through the logistic clamp; no gradient pushing further into a bound.
    const double o = std::clamp(p.opacity, kMinOpacity, kMaxOpacity);
    double d_logit = sg.opacity[k] * o * (1.0 - o);
    if ((p.opacity >= kMaxOpacity && d_logit < 0.0) || (p.opacity <= kMinOpacity && d_logit > 0.0)) d_logit = 0.0;
    out.grad.opacity_logit[i] = d_logit;

    // Conic -> screen covariance -> (J, Σ).
    const Mat2& a = s.conic;
    const Mat2 g_cov2 = -a * sg.conic[k] * a;
    const detail::Mat23 t_mat = s.jacobian * world_to_cam;
    const Mat3 g_sigma = t_mat.transpose() * g_cov2 * t_mat;
    const detail::Mat23 g_t = 2.0 * g_cov2 * t_mat * s.world_cov;
    const detail::Mat23 g_j = g_t * cam_to_world;

    const Vec3& t = s.cam_point;
    const double iz = 1.0 / t.z();
    const double iz2 = iz * iz;
    Vec3 g_cam = s.jacobian.transpose() * sg.mean[k];
    g_cam.z() += ga[kDepthCh];
    g_cam.x() += g_j(0, 2) * (-cam.fx * iz2);
    g_cam.y() += g_j(1, 2) * (-cam.fy * iz2);
    g_cam.z() += g_j(0, 0) * (-cam.fx * iz2) + g_j(0, 2) * (2.0 * cam.fx * t.x() * iz2 * iz) +
                 g_j(1, 1) * (-cam.fy * iz2) + g_j(1, 2) * (2.0 * cam.fy * t.y() * iz2 * iz);
    out.grad.center.row(i) = (cam_to_world * g_cam).transpose();

    // Σ = M Mᵀ, M = R S.
    const Mat3 r = p.rotation_matrix();
    const Mat3 m = r * p.scale.asDiagonal();
    const Mat3 g_m = 2.0 * g_sigma * m;
    const Mat3 rt_gm = r.transpose() * g_m;
    for (int c = 0; c < 3; ++c) out.grad.log_scale(i, c) = rt_gm(c, c) * p.scale[c];
    const Mat3 g_r = g_m * p.scale.asDiagonal();
    const Quat qn = normalized_quat(p.rotation);
    const Vec4 g_q = rotation_backward(qn, g_r);
    out.grad.rotation.row(i) = (g_q - qn * qn.dot(g_q)).transpose() / p.rotation.norm();
  }
  return out;
}

void FitConfig::validate() const {
  if (iterations <= 0) throw_precondition("fit: iterations must be positive");
  for (double v : {lr.center, lr.color, lr.opacity, lr.scale, lr.rotation, lr.latent, lr.decoder})
    if (!(v > 0.0)) throw_precondition("fit: learning rates must be positive");
  if (feature_samples < 0) throw_precondition("fit: feature_samples must be non-negative");
  if (divergence_window <= 0 || !(divergence_factor > 1.0)) throw_precondition("fit: invalid divergence guard");
}

LossReport evaluate(const Scene& scene, const std::vector<Frame>& frames, const LossWeights& weights) {
  if (frames.empty()) throw_precondition("evaluate: no frames");
  LossReport mean;
  for (const Frame& f : frames) {
    const LossReport r = compute_losses(render(scene, f.camera), f, scene.decoder, weights);
    mean.color_l2 += r.color_l2;
    mean.depth_l2 += r.depth_l2;
    mean.feat_obj_cosine += r.feat_obj_cosine;
    mean.feat_part_cosine += r.feat_part_cosine;
    mean.total += r.total;
  }
  const double inv = 1.0 / static_cast<double>(frames.size());
  mean.color_l2 *= inv;
  mean.depth_l2 *= inv;
  mean.feat_obj_cosine *= inv;
  mean.feat_part_cosine *= inv;
  mean.total *= inv;
  return mean;
}

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct Adam {
  std::vector<double> m, v;
  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
  // Returns the step to subtract.
  double step(std::size_t k, double g, double lr, double bc1, double bc2) {
    m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * g;
    v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * g * g;
    return lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + kAdamEps);
  }
};

template <typename Fn>
void visit_decoder(DecoderWeights& w, const DecoderWeights& g, Fn&& fn) {
  std::size_t k = 0;
  auto visit = [&](auto& param, const auto& grad) {
    for (Eigen::Index i = 0; i < param.size(); ++i) fn(k++, param.data()[i], grad.data()[i]);
  };
  visit(w.trunk_w, g.trunk_w);
  visit(w.trunk_b, g.trunk_b);
  visit(w.obj_w, g.obj_w);
  visit(w.obj_b, g.obj_b);
  visit(w.part_w, g.part_w);
  visit(w.part_b, g.part_b);
}

double centre_extent(const Scene& scene) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : scene.primitives) mean += p.center;
  mean /= static_cast<double>(scene.size());
  double r = 0.0;
  for (const auto& p : scene.primitives) r = std::max(r, (p.center - mean).norm());
  return std::max(r, 1e-3);
}

std::vector<std::size_t> feature_candidates(const Frame& f) {
  std::vector<std::size_t> ids;
  if (f.f_obj.empty() && f.f_part.empty()) return ids;
  const int w = f.color.width();
  const int h = f.color.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * w + x;
      if (!f.loss_mask.empty() && !f.loss_mask(x, y)) continue;
      if ((!f.f_obj.empty() && f.f_obj.assigned(x, y)) || (!f.f_part.empty() && f.f_part.assigned(x, y)))
        ids.push_back(pix);
    }
  }
  return ids;
}

FitStats fit_impl(Scene& scene, const std::vector<Frame>& frames, const FitConfig& config,
                  const std::vector<std::uint8_t>* active) {
  config.validate();
  if (frames.empty()) throw_precondition("fit: at least one frame is required");
  if (scene.primitives.empty()) throw_precondition("fit: empty scene");
  scene.validate();

  const std::size_t n = scene.size();
  const double extent = config.scene_extent > 0.0 ? config.scene_extent : centre_extent(scene);
  const LearningRates& lr = config.lr;
  const ParameterGroups& on = config.groups;

  Adam a_center, a_rot, a_scale, a_opacity, a_color, a_latent, a_decoder;
  a_center.resize(n * 3);
  a_rot.resize(n * 4);
  a_scale.resize(n * 3);
  a_opacity.resize(n);
  a_color.resize(n * 3);
  a_latent.resize(n * kLatentDim);
  a_decoder.resize(scene.decoder.parameter_count());

  std::vector<std::vector<std::size_t>> candidates;
  for (const Frame& f : frames) candidates.push_back(feature_candidates(f));
  std::mt19937_64 rng(config.seed);

  FitStats stats;
  stats.initial = evaluate(scene, frames, config.weights);
  const double reference = stats.initial.total;
  int above = 0;
  std::vector<std::size_t> sample;

  for (int it = 0; it < config.iterations; ++it) {
    const std::size_t fi = static_cast<std::size_t>(it) % frames.size();
    sample.clear();
    const auto& cand = candidates[fi];
    if (config.feature_samples > 0 && cand.size() > static_cast<std::size_t>(config.feature_samples)) {
      std::sample(cand.begin(), cand.end(), std::back_inserter(sample), config.feature_samples, rng);
    }
    const GradientResult res = gradients(scene, frames[fi], config.weights, sample);
    if (!std::isfinite(res.loss.total)) throw_numerical("fit: non-finite loss at iteration " + std::to_string(it));
    stats.trace.push_back(res.loss);

    above = res.loss.total > config.divergence_factor * reference ? above + 1 : 0;
    if (above >= config.divergence_window) {
      std::ostringstream msg;
      msg << "fit: diverged at iteration " << it << " (total " << res.loss.total << " vs initial " << reference
          << " for " << above << " consecutive iterations)";
      throw_numerical(msg.str());
    }

    const double t = it + 1.0;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
    const SceneGradients& g = res.grad;
    for (std::size_t i = 0; i < n; ++i) {
      if (active && !(*active)[i]) continue;
      GaussianPrimitive& p = scene.primitives[i];
      const auto row = static_cast<Eigen::Index>(i);
      // Zero steps leave values bit-identical (no round trip through log/logit/normalisation).
      if (on.center)
        for (int c = 0; c < 3; ++c) p.center[c] -= a_center.step(i * 3 + c, g.center(row, c), lr.center * extent, bc1, bc2);
      if (on.rotation) {
        bool moved = false;
        for (int c = 0; c < 4; ++c) {
          const double d = a_rot.step(i * 4 + c, g.rotation(row, c), lr.rotation, bc1, bc2);
          p.rotation[c] -= d;
          moved = moved || d != 0.0;
        }
        if (moved) p.rotation = normalized_quat(p.rotation);
      }
      if (on.scale) {
        for (int c = 0; c < 3; ++c) {
          const double d = a_scale.step(i * 3 + c, g.log_scale(row, c), lr.scale, bc1, bc2);
          if (d != 0.0) p.scale[c] = std::exp(std::log(p.scale[c]) - d);
        }
      }
      if (on.opacity) {
        const double d = a_opacity.step(i, g.opacity_logit[row], lr.opacity, bc1, bc2);
        if (d != 0.0) p.opacity = logit_to_opacity(opacity_to_logit(p.opacity) - d);
      }
      if (on.color)
        for (int c = 0; c < 3; ++c) p.color[c] -= a_color.step(i * 3 + c, g.color(row, c), lr.color, bc1, bc2);
      if (on.latent)
        for (int c = 0; c < kLatentDim; ++c)
          p.feature_latent[c] -= a_latent.step(i * kLatentDim + c, g.latent(row, c), lr.latent, bc1, bc2);
    }
    if (on.decoder) {
      visit_decoder(scene.decoder, g.decoder, [&](std::size_t k, double& w, double gw) {
        w -= a_decoder.step(k, gw, lr.decoder, bc1, bc2);
      });
    }
    ++stats.iterations;
    if (config.callback && config.callback_every > 0 && stats.iterations % config.callback_every == 0)
      config.callback(stats.iterations);
  }
  stats.final = evaluate(scene, frames, config.weights);
  return stats;
}

}  // namespace

FitStats fit(Scene& scene, const std::vector<Frame>& frames, const FitConfig& config) {
  return fit_impl(scene, frames, config, nullptr);
}

FitStats partial_finetune(Scene& scene, const std::vector<Frame>& frames, const std::vector<PartialMasks>& masks,
                          const FitConfig& config) {
  if (masks.size() != frames.size()) throw_precondition("partial_finetune: one mask pair per frame is required");
  std::vector<Frame> masked;
  std::vector<Mask> unions;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const Frame& f = frames[k];
    const int w = f.camera.width;
    const int h = f.camera.height;
    Mask u(w, h, 1, 0);
    for (const Mask* m : {&masks[k].before, &masks[k].after}) {
      if (m->empty()) continue;
      if (m->width() != w || m->height() != h) throw_precondition("partial_finetune: mask size differs from camera");
      for (std::size_t pix = 0; pix < u.data().size(); ++pix) u.data()[pix] |= m->data()[pix] ? 1 : 0;
    }
    u = dilate(u, kPartialMaskDilation);
    if (!f.loss_mask.empty())
      for (std::size_t pix = 0; pix < u.data().size(); ++pix) u.data()[pix] &= f.loss_mask.data()[pix] ? 1 : 0;
    unions.push_back(u);
    if (count_nonzero(u) == 0) continue;
    Frame copy = f;
    copy.loss_mask = u;
    masked.push_back(std::move(copy));
  }
  if (masked.empty()) {
    warn("partial_finetune: empty mask union, nothing to optimise");
    return {};
  }

  std::vector<std::uint8_t> active(scene.size(), 0);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    for (std::size_t k = 0; k < frames.size() && !active[i]; ++k) {
      const auto uvz = frames[k].camera.project(scene.primitives[i].center);
      if (!uvz) continue;
      const int u = static_cast<int>(std::lround((*uvz)[0]));
      const int v = static_cast<int>(std::lround((*uvz)[1]));
      if (unions[k].contains(u, v) && unions[k](u, v)) active[i] = 1;
    }
  }
  FitConfig cfg = config;
  cfg.groups.decoder = false;
  return fit_impl(scene, masked, cfg, &active);
}

double psnr(const ImageD& rendered, const ImageD& target) {
  if (!rendered.same_size(target) || rendered.channels() != target.channels())
    throw_precondition("psnr: image shapes differ");
  double sum = 0.0;
  const auto a = rendered.data();
  const auto b = target.data();
  for (std::size_t k = 0; k < a.size(); ++k) sum += (a[k] - b[k]) * (a[k] - b[k]);
  const double mse = sum / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace splatgrasp
