#include "splatgrasp/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "splatgrasp/detail/parallel.hpp"
#include "splatgrasp/detail/raster.hpp"

namespace splatgrasp {

namespace detail {

std::optional<ProjectedPrimitive> project(const Camera& camera, const GaussianPrimitive& primitive, Index index) {
  if (!(primitive.opacity > kAlphaCutoff)) return std::nullopt;
  const Vec3 t = camera.world_to_camera(primitive.center);
  if (!(t.z() > kNearPlane)) return std::nullopt;

  ProjectedPrimitive out;
  out.index = index;
  out.cam_point = t;
  out.opacity = primitive.opacity;
  out.world_cov = primitive.covariance();

  const double iz = 1.0 / t.z();
  out.jacobian << camera.fx * iz, 0.0, -camera.fx * t.x() * iz * iz,  //
      0.0, camera.fy * iz, -camera.fy * t.y() * iz * iz;
  const Mat23 jw = out.jacobian * camera.pose.rotation.transpose();
  Mat2 cov = jw * out.world_cov * jw.transpose();
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  cov += kCovarianceFloor * Mat2::Identity();

  Splat2D& s = out.splat;
  s.mean = Vec2(camera.fx * t.x() * iz + camera.cx, camera.fy * t.y() * iz + camera.cy);
  s.cov = cov;
  s.view_depth = t.z();
  const double half_trace = 0.5 * (cov(0, 0) + cov(1, 1));
  const double half_gap = std::sqrt(0.25 * (cov(0, 0) - cov(1, 1)) * (cov(0, 0) - cov(1, 1)) + cov(0, 1) * cov(0, 1));
  const double lambda_max = half_trace + half_gap;
  s.effective_radius = std::sqrt(2.0 * lambda_max * std::log(primitive.opacity / kAlphaCutoff));
  out.q_cut = 2.0 * std::log(primitive.opacity / kAlphaCutoff) * (1.0 + 1e-9) + 1e-9;

  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  out.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(0, 1) / det, cov(0, 0) / det;

  const double r = s.effective_radius;
  if (s.mean.x() + r < 0.0 || s.mean.y() + r < 0.0 || s.mean.x() - r > camera.width - 1.0 ||
      s.mean.y() - r > camera.height - 1.0 || !s.mean.allFinite()) {
    return std::nullopt;
  }
  return out;
}

RasterPlan build_plan(const Scene& scene, const Camera& camera) {
  camera.validate();
  RasterPlan plan;
  plan.width = camera.width;
  plan.height = camera.height;
  plan.tiles_x = (camera.width + kTileSize - 1) / kTileSize;
  plan.tiles_y = (camera.height + kTileSize - 1) / kTileSize;
  plan.tiles.resize(static_cast<std::size_t>(plan.tiles_x) * plan.tiles_y);

  for (Index i = 0; i < scene.primitives.size(); ++i) {
    auto p = project(camera, scene.primitives[i], i);
    if (p) plan.splats.push_back(*p);
  }
  for (std::uint32_t k = 0; k < plan.splats.size(); ++k) {
    const Splat2D& s = plan.splats[k].splat;
    const int x0 = std::max(0, static_cast<int>(std::ceil(s.mean.x() - s.effective_radius)));
    const int x1 = std::min(camera.width - 1, static_cast<int>(std::floor(s.mean.x() + s.effective_radius)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(s.mean.y() - s.effective_radius)));
    const int y1 = std::min(camera.height - 1, static_cast<int>(std::floor(s.mean.y() + s.effective_radius)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty)
      for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx)
        plan.tiles[static_cast<std::size_t>(ty) * plan.tiles_x + tx].push_back(k);
  }
  const auto& splats = plan.splats;
  for (auto& list : plan.tiles) {
    std::sort(list.begin(), list.end(), [&splats](std::uint32_t a, std::uint32_t b) {
      const double da = splats[a].splat.view_depth;
      const double db = splats[b].splat.view_depth;
      if (da != db) return da < db;
      return splats[a].index < splats[b].index;
    });
  }
  return plan;
}

namespace {

template <typename Fn>
void for_each_tile_pixel(const RasterPlan& plan, std::size_t tile, Fn&& fn) {
  const int tx = static_cast<int>(tile % plan.tiles_x);
  const int ty = static_cast<int>(tile / plan.tiles_x);
  const int x_end = std::min(plan.width, (tx + 1) * kTileSize);
  const int y_end = std::min(plan.height, (ty + 1) * kTileSize);
  for (int y = ty * kTileSize; y < y_end; ++y)
    for (int x = tx * kTileSize; x < x_end; ++x) fn(x, y);
}

}  // namespace

CompositeState composite(const RasterPlan& plan, const std::vector<double>& attrs, int channels) {
  if (attrs.size() != plan.splats.size() * static_cast<std::size_t>(channels))
    throw_precondition("composite: attribute array does not match splat count");
  const std::size_t pixels = static_cast<std::size_t>(plan.width) * plan.height;
  CompositeState st;
  st.output.assign(pixels * channels, 0.0);
  st.final_transmittance.assign(pixels, 1.0);
  st.processed.assign(pixels, 0);
  st.contributors.assign(pixels, 0);

  parallel_for(plan.tiles.size(), [&](std::size_t tile) {
    const auto& list = plan.tiles[tile];
    if (list.empty()) return;
    for_each_tile_pixel(plan, tile, [&](int x, int y) {
      const std::size_t pix = static_cast<std::size_t>(y) * plan.width + x;
      double* out = st.output.data() + pix * channels;
      double transmittance = 1.0;
      std::uint32_t processed = 0;
      std::int32_t contributors = 0;
      for (std::size_t k = 0; k < list.size(); ++k) {
        const PixelAlpha pa = pixel_alpha(plan.splats[list[k]], x, y);
        processed = static_cast<std::uint32_t>(k + 1);
        if (pa.alpha < kAlphaCutoff) continue;
        const double w = pa.alpha * transmittance;
        const double* a = attrs.data() + static_cast<std::size_t>(list[k]) * channels;
        for (int c = 0; c < channels; ++c) out[c] += w * a[c];
        transmittance *= 1.0 - pa.alpha;
        ++contributors;
        if (transmittance < kMinTransmittance) break;
      }
      st.final_transmittance[pix] = transmittance;
      st.processed[pix] = processed;
      st.contributors[pix] = contributors;
    });
  });
  return st;
}

SplatGradients composite_backward(const RasterPlan& plan, const std::vector<double>& attrs, int channels,
                                  const CompositeState& forward, const std::vector<double>& grad_output) {
  const std::size_t n = plan.splats.size();
  const std::size_t pixels = static_cast<std::size_t>(plan.width) * plan.height;
  if (grad_output.size() != pixels * channels) throw_precondition("composite_backward: gradient size mismatch");

  // Per-tile partial sums, reduced in tile order so the result is independent of threading.
  struct TileGrad {
    std::vector<double> attrs, opacity;
    std::vector<Vec2> mean;
    std::vector<Mat2> conic;
  };
  std::vector<TileGrad> partial(plan.tiles.size());

  parallel_for(plan.tiles.size(), [&](std::size_t tile) {
    const auto& list = plan.tiles[tile];
    if (list.empty()) return;
    TileGrad& g = partial[tile];
    g.attrs.assign(list.size() * channels, 0.0);
    g.opacity.assign(list.size(), 0.0);
    g.mean.assign(list.size(), Vec2::Zero());
    g.conic.assign(list.size(), Mat2::Zero());
    std::vector<double> behind(channels);

    for_each_tile_pixel(plan, tile, [&](int x, int y) {
      const std::size_t pix = static_cast<std::size_t>(y) * plan.width + x;
      const double* go = grad_output.data() + pix * channels;
      bool any = false;
      for (int c = 0; c < channels; ++c) any = any || go[c] != 0.0;
      if (!any) return;
      std::fill(behind.begin(), behind.end(), 0.0);
      double transmittance = forward.final_transmittance[pix];
      for (std::size_t k = forward.processed[pix]; k-- > 0;) {
        const ProjectedPrimitive& s = plan.splats[list[k]];
        const PixelAlpha pa = pixel_alpha(s, x, y);
        if (pa.alpha < kAlphaCutoff) continue;
        transmittance /= 1.0 - pa.alpha;  // now T before this splat
        const double w = pa.alpha * transmittance;
        const double* a = attrs.data() + static_cast<std::size_t>(list[k]) * channels;
        double d_alpha = 0.0;
        for (int c = 0; c < channels; ++c) {
          g.attrs[k * channels + c] += go[c] * w;
          d_alpha += go[c] * (a[c] * transmittance - behind[c] / (1.0 - pa.alpha));
          behind[c] += a[c] * w;
        }
        if (pa.clamped) continue;
        g.opacity[k] += d_alpha * pa.gaussian;
        const double d_q = -0.5 * s.opacity * pa.gaussian * d_alpha;
        g.mean[k] += -2.0 * d_q * (s.conic * pa.delta);
        g.conic[k] += d_q * pa.delta * pa.delta.transpose();
      }
    });
  });

  SplatGradients out;
  out.attrs.assign(n * channels, 0.0);
  out.opacity.assign(n, 0.0);
  out.mean.assign(n, Vec2::Zero());
  out.conic.assign(n, Mat2::Zero());
  for (std::size_t tile = 0; tile < plan.tiles.size(); ++tile) {
    const auto& list = plan.tiles[tile];
    const TileGrad& g = partial[tile];
    if (g.opacity.empty()) continue;
    for (std::size_t k = 0; k < list.size(); ++k) {
      const std::size_t s = list[k];
      for (int c = 0; c < channels; ++c) out.attrs[s * channels + c] += g.attrs[k * channels + c];
      out.opacity[s] += g.opacity[k];
      out.mean[s] += g.mean[k];
      out.conic[s] += g.conic[k];
    }
  }
  return out;
}

}  // namespace detail

std::optional<Splat2D> project_gaussian(const Camera& camera, const GaussianPrimitive& primitive) {
  camera.validate();
  auto p = detail::project(camera, primitive, 0);
  if (!p) return std::nullopt;
  return p->splat;
}

namespace {

constexpr int kDepthOffset = 0;
constexpr int kColorOffset = 1;
constexpr int kFeatureOffset = 4;
constexpr int kNormalOffset = 4 + kLatentDim;
constexpr int kAllChannelCount = kNormalOffset + 3;

}  // namespace

RenderedBuffers render(const Scene& scene, const Camera& camera, ChannelSet channels) {
  const detail::RasterPlan plan = detail::build_plan(scene, camera);
  const Mat3 world_to_cam = camera.pose.rotation.transpose();
  const Vec3 eye = camera.center();

  std::vector<double> attrs(plan.splats.size() * kAllChannelCount, 0.0);
  for (std::size_t k = 0; k < plan.splats.size(); ++k) {
    const GaussianPrimitive& p = scene.primitives[plan.splats[k].index];
    double* a = attrs.data() + k * kAllChannelCount;
    a[kDepthOffset] = plan.splats[k].splat.view_depth;
    for (int c = 0; c < 3; ++c) a[kColorOffset + c] = p.color[c];
    for (int c = 0; c < kLatentDim; ++c) a[kFeatureOffset + c] = p.feature_latent[c];
    if (channels & kChannelNormal) {
      const Vec3 n = world_to_cam * primitive_normal(p, eye).normal;
      for (int c = 0; c < 3; ++c) a[kNormalOffset + c] = n[c];
    }
  }
  const detail::CompositeState st = detail::composite(plan, attrs, kAllChannelCount);

  const int w = camera.width;
  const int h = camera.height;
  RenderedBuffers out;
  out.width = w;
  out.height = h;
  out.alpha = ImageD(w, h, 1);
  out.contrib_count = LabelImage(w, h, 1);
  if (channels & kChannelDepth) out.depth = ImageD(w, h, 1);
  if (channels & kChannelColor) out.color = ImageD(w, h, 3);
  if (channels & kChannelFeature) out.feature = ImageD(w, h, kLatentDim);
  if (channels & kChannelNormal) out.normal = ImageD(w, h, 3);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * w + x;
      const double* v = st.output.data() + pix * kAllChannelCount;
      out.alpha(x, y) = 1.0 - st.final_transmittance[pix];
      out.contrib_count(x, y) = st.contributors[pix];
      if (channels & kChannelDepth) out.depth(x, y) = v[kDepthOffset];
      if (channels & kChannelColor)
        for (int c = 0; c < 3; ++c) out.color(x, y, c) = v[kColorOffset + c];
      if (channels & kChannelFeature)
        for (int c = 0; c < kLatentDim; ++c) out.feature(x, y, c) = v[kFeatureOffset + c];
      if (channels & kChannelNormal) {
        const Vec3 n(v[kNormalOffset], v[kNormalOffset + 1], v[kNormalOffset + 2]);
        const double len = n.norm();
        if (out.alpha(x, y) > 0.0 && len > 0.0)
          for (int c = 0; c < 3; ++c) out.normal(x, y, c) = n[c] / len;
      }
    }
  }
  return out;
}

Mask render_mask(const Scene& scene, std::span<const Index> indices, const Camera& camera) {
  camera.validate();
  for (Index i : indices) {
    if (i >= scene.primitives.size()) {
      std::ostringstream msg;
      msg << "render_mask: index " << i << " out of range (" << scene.primitives.size() << ")";
      throw_precondition(msg.str());
    }
  }
  Mask mask(camera.width, camera.height, 1, 0);
  if (indices.empty()) return mask;

  std::vector<std::uint8_t> selected(scene.primitives.size(), 0);
  for (Index i : indices) selected[i] = 1;
  const detail::RasterPlan plan = detail::build_plan(scene, camera);
  std::vector<double> attrs(plan.splats.size());
  for (std::size_t k = 0; k < plan.splats.size(); ++k) attrs[k] = selected[plan.splats[k].index];
  const detail::CompositeState st = detail::composite(plan, attrs, 1);
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x)
      mask(x, y) = st.output[static_cast<std::size_t>(y) * camera.width + x] > 0.5 ? 1 : 0;
  return mask;
}

ImageD render_normals(const Scene& scene, const Camera& camera) {
  return render(scene, camera, kChannelNormal).normal;
}

}  // namespace splatgrasp
