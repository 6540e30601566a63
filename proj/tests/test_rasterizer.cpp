#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "splatgrasp/rasterizer.hpp"
#include "support/reference.hpp"
#include "support/scenes.hpp"

using namespace splatgrasp;
using splatgrasp::testing::brute_force_render;
using splatgrasp::testing::make_camera;
using splatgrasp::testing::random_scene;

namespace {

GaussianPrimitive at_pixel(const Camera& cam, double u, double v, double depth, double opacity) {
  GaussianPrimitive p;
  p.center = cam.backproject(u, v, depth);
  p.scale = Vec3::Constant(0.02);
  p.opacity = opacity;
  return p;
}

double max_abs_diff(const std::span<const double> a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < b.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST(ProjectGaussian, OnAxisIsotropicCovarianceIsFocalScaled) {
  const Camera cam = make_camera(64, 64, 100.0);
  GaussianPrimitive p;
  p.center = Vec3(0, 0, 1.0);
  p.scale = Vec3::Constant(0.02);
  const auto s = project_gaussian(cam, p);
  ASSERT_TRUE(s);
  const double expected = (100.0 * 0.02) * (100.0 * 0.02) + kCovarianceFloor;
  EXPECT_NEAR(s->cov(0, 0), expected, 1e-12);
  EXPECT_NEAR(s->cov(1, 1), expected, 1e-12);
  EXPECT_NEAR(s->cov(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(s->mean.x(), cam.cx, 1e-12);
  EXPECT_DOUBLE_EQ(s->view_depth, 1.0);
}

TEST(ProjectGaussian, BehindCameraAndNearPlaneAreCulled) {
  const Camera cam = make_camera(32, 32, 50.0);
  GaussianPrimitive p;
  p.center = Vec3(0, 0, -1.0);
  EXPECT_FALSE(project_gaussian(cam, p));
  p.center = Vec3(0, 0, 0.005);
  EXPECT_FALSE(project_gaussian(cam, p));
}

TEST(ProjectGaussian, FarOutsideImageIsCulled) {
  const Camera cam = make_camera(32, 32, 50.0);
  GaussianPrimitive p;
  p.center = Vec3(10.0, 0, 1.0);
  EXPECT_FALSE(project_gaussian(cam, p));
}

TEST(ProjectGaussian, CovarianceMatchesMonteCarloPropagation) {
  const Camera cam = make_camera(128, 128, 150.0);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    GaussianPrimitive p;
    p.center = Vec3(0.2 * n01(rng), 0.2 * n01(rng), 1.5 + 0.2 * n01(rng));
    p.rotation = normalized_quat(Quat(n01(rng), n01(rng), n01(rng), n01(rng)));
    p.scale = Vec3(0.01, 0.004, 0.007);
    const auto s = project_gaussian(cam, p);
    ASSERT_TRUE(s);
    const Mat3 l = p.covariance().llt().matrixL();
    Vec2 mean = Vec2::Zero();
    Mat2 second = Mat2::Zero();
    const int samples = 100000;
    std::vector<Vec2> pts(samples);
    for (auto& q : pts) {
      const Vec3 x = p.center + l * Vec3(n01(rng), n01(rng), n01(rng));
      const auto uv = cam.project(x);
      q = Vec2((*uv)[0], (*uv)[1]);
      mean += q;
    }
    mean /= samples;
    for (const auto& q : pts) second += (q - mean) * (q - mean).transpose();
    second /= samples - 1;
    const Mat2 analytic = s->cov - kCovarianceFloor * Mat2::Identity();
    EXPECT_LT((analytic - second).norm() / second.norm(), 0.05) << "trial " << trial;
  }
}

TEST(Render, SinglePrimitiveAtFullOpacityIsClamped) {
  const Camera cam = make_camera(9, 9, 20.0);
  Scene scene;
  GaussianPrimitive p = at_pixel(cam, 4, 4, 2.0, 1.0);
  p.color = Vec3(0.2, 0.4, 0.6);
  p.feature_latent.setLinSpaced(-1.0, 1.0);
  scene.primitives.push_back(p);
  const RenderedBuffers r = render(scene, cam);
  EXPECT_DOUBLE_EQ(r.alpha(4, 4), kMaxAlpha);
  EXPECT_DOUBLE_EQ(r.depth(4, 4) / r.alpha(4, 4), 2.0);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.color(4, 4, c), kMaxAlpha * p.color[c], 1e-15);
  for (int c = 0; c < kLatentDim; ++c) EXPECT_NEAR(r.feature(4, 4, c), kMaxAlpha * p.feature_latent[c], 1e-15);
}

TEST(Render, TwoHalfOpaquePrimitivesCompositeFrontToBack) {
  const Camera cam = make_camera(9, 9, 20.0);
  Scene scene;
  GaussianPrimitive back = at_pixel(cam, 4, 4, 3.0, 0.5);
  back.color = Vec3(0, 0, 1);
  GaussianPrimitive front = at_pixel(cam, 4, 4, 1.0, 0.5);
  front.color = Vec3(1, 0, 0);
  scene.primitives = {back, front};
  const RenderedBuffers r = render(scene, cam);
  EXPECT_NEAR(r.color(4, 4, 0), 0.5, 1e-15);
  EXPECT_NEAR(r.color(4, 4, 2), 0.25, 1e-15);
  EXPECT_NEAR(r.alpha(4, 4), 0.75, 1e-15);
  EXPECT_EQ(r.contrib_count(4, 4), 2);
}

TEST(Render, EmptyPixelsAreZero) {
  const Camera cam = make_camera(40, 40, 40.0);
  Scene scene;
  scene.primitives.push_back(at_pixel(cam, 5, 5, 1.0, 0.9));
  const RenderedBuffers r = render(scene, cam, kDefaultChannels | kChannelNormal);
  EXPECT_EQ(r.alpha(35, 35), 0.0);
  EXPECT_EQ(r.depth(35, 35), 0.0);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(r.color(35, 35, c), 0.0);
    EXPECT_EQ(r.normal(35, 35, c), 0.0);
  }
  EXPECT_EQ(r.contrib_count(35, 35), 0);
}

TEST(Render, MatchesBruteForceCompositor) {
  const Camera cam = make_camera(8, 8, 10.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene scene = random_scene(cam, 12, seed, 0.05, 1.0);
    const RenderedBuffers r = render(scene, cam);
    const auto ref = brute_force_render(scene, cam);
    EXPECT_LT(max_abs_diff(r.depth.data(), ref.depth), 1e-6);
    EXPECT_LT(max_abs_diff(r.color.data(), ref.color), 1e-6);
    EXPECT_LT(max_abs_diff(r.feature.data(), ref.feature), 1e-6);
    EXPECT_LT(max_abs_diff(r.alpha.data(), ref.alpha), 1e-6);
  }
}

TEST(Render, MultiTileImageMatchesBruteForce) {
  const Camera cam = make_camera(40, 23, 30.0);
  const Scene scene = random_scene(cam, 80, 99, 0.05, 1.0);
  const auto ref = brute_force_render(scene, cam);
  const RenderedBuffers r = render(scene, cam);
  EXPECT_LT(max_abs_diff(r.color.data(), ref.color), 1e-6);
  EXPECT_LT(max_abs_diff(r.depth.data(), ref.depth), 1e-6);
}

TEST(Render, DeterministicAndThreadIndependent) {
  const Camera cam = make_camera(48, 40, 30.0);
  const Scene scene = random_scene(cam, 60, 3);
  const RenderedBuffers a = render(scene, cam);
  set_thread_count(3);
  const RenderedBuffers b = render(scene, cam);
  set_thread_count(1);
  EXPECT_TRUE(a.color == b.color);
  EXPECT_TRUE(a.depth == b.depth);
  EXPECT_TRUE(a.feature == b.feature);
  EXPECT_TRUE(a.alpha == b.alpha);
}

TEST(Render, StorageOrderDoesNotMatter) {
  const Camera cam = make_camera(24, 24, 20.0);
  Scene scene = random_scene(cam, 30, 11);
  const RenderedBuffers a = render(scene, cam);
  std::reverse(scene.primitives.begin(), scene.primitives.end());
  const RenderedBuffers b = render(scene, cam);
  EXPECT_TRUE(a.color == b.color);
  EXPECT_TRUE(a.depth == b.depth);
}

TEST(Render, AlphaBoundedAndEmptyAlphaMeansZeroBuffers) {
  const Camera cam = make_camera(32, 32, 25.0);
  const Scene scene = random_scene(cam, 40, 5, 0.5, 1.0);
  const RenderedBuffers r = render(scene, cam);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      EXPECT_GE(r.alpha(x, y), 0.0);
      EXPECT_LE(r.alpha(x, y), 1.0);
      EXPECT_GE(r.contrib_count(x, y), 0);
      if (r.alpha(x, y) == 0.0) EXPECT_EQ(r.depth(x, y), 0.0);
    }
  }
}

TEST(Render, TransmittanceNeverIncreasesAlongTheList) {
  // Adding a primitive behind everything can only raise accumulated alpha.
  const Camera cam = make_camera(16, 16, 15.0);
  Scene scene = random_scene(cam, 20, 21);
  const RenderedBuffers before = render(scene, cam);
  GaussianPrimitive far = at_pixel(cam, 8, 8, 50.0, 0.9);
  far.scale = Vec3::Constant(5.0);
  scene.primitives.push_back(far);
  const RenderedBuffers after = render(scene, cam);
  for (std::size_t k = 0; k < before.alpha.data().size(); ++k)
    EXPECT_GE(after.alpha.data()[k], before.alpha.data()[k]);
}

TEST(RenderMask, AllAndNone) {
  const Camera cam = make_camera(12, 10, 10.0);
  Scene scene;
  GaussianPrimitive wall;
  wall.center = Vec3(0, 0, 1.0);
  wall.scale = Vec3(2.0, 2.0, 0.01);
  wall.opacity = 1.0;
  scene.primitives.push_back(wall);
  IndexSet all{0};
  const Mask full = render_mask(scene, all, cam);
  EXPECT_EQ(count_nonzero(full), static_cast<std::size_t>(12 * 10));
  const Mask none = render_mask(scene, IndexSet{}, cam);
  EXPECT_EQ(count_nonzero(none), 0u);
  EXPECT_THROW(render_mask(scene, IndexSet{3}, cam), Error);
}

TEST(RenderMask, OccludedSubsetIsHidden) {
  const Camera cam = make_camera(12, 12, 10.0);
  Scene scene;
  GaussianPrimitive front, back;
  front.center = Vec3(0, 0, 1.0);
  back.center = Vec3(0, 0, 2.0);
  front.scale = back.scale = Vec3(3.0, 3.0, 0.01);
  front.opacity = back.opacity = 1.0;
  scene.primitives = {front, back};
  EXPECT_EQ(count_nonzero(render_mask(scene, IndexSet{1}, cam)), 0u);
  EXPECT_EQ(count_nonzero(render_mask(scene, IndexSet{0}, cam)), 144u);
}

TEST(RenderNormals, FlatPrimitiveFacingCamera) {
  const Camera cam = make_camera(15, 15, 20.0);
  Scene scene;
  GaussianPrimitive disc;
  disc.center = Vec3(0, 0, 1.0);
  disc.scale = Vec3(0.1, 0.1, 0.001);
  disc.opacity = 0.9;
  scene.primitives.push_back(disc);
  const ImageD n = render_normals(scene, cam);
  EXPECT_NEAR(n(7, 7, 0), 0.0, 1e-12);
  EXPECT_NEAR(n(7, 7, 1), 0.0, 1e-12);
  EXPECT_NEAR(n(7, 7, 2), -1.0, 1e-12);
}

TEST(RenderNormals, EmptyPixelIsZero) {
  const Camera cam = make_camera(40, 40, 40.0);
  Scene scene;
  GaussianPrimitive p;
  p.center = cam.backproject(3, 3, 1.0);
  p.scale = Vec3(0.002, 0.002, 0.0002);
  scene.primitives.push_back(p);
  const ImageD n = render_normals(scene, cam);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(n(30, 30, c), 0.0);
}
