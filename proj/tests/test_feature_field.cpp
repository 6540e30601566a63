#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "splatgrasp/feature_field.hpp"
#include "splatgrasp/oracles.hpp"
#include "splatgrasp/pipeline.hpp"
#include "support/table_oracle.hpp"

using namespace splatgrasp;
using namespace splatgrasp::testing;

namespace {

FeatureMap random_map(int w, int h, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  FeatureMap m(w, h, c);
  Eigen::VectorXd v(c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) v[k] = g(rng);
      m.set(x, y, v);
    }
  return m;
}

Mask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
  Mask m(w, h, 1, 0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m(x, y) = 1;
  return m;
}

// Patch features constant per box, keyed by the box's left column.
class ConstantPatchOracle : public EmbeddingOracle {
 public:
  explicit ConstantPatchOracle(std::map<int, Eigen::VectorXd> by_x) : by_x_(std::move(by_x)) {}
  int embedding_dim() const override { return static_cast<int>(by_x_.begin()->second.size()); }
  FeatureMap image_features(const OracleImage&) const override { throw_precondition("unsupported"); }
  DetectionSet detections(const OracleImage&) const override { throw_precondition("unsupported"); }
  FeatureMap patch_features(const ImageD& patch, const OracleImage&, const Box& box) const override {
    EXPECT_EQ(patch.width(), kPatchSize);
    EXPECT_EQ(patch.height(), kPatchSize);
    FeatureMap out(kPatchGrid, kPatchGrid, embedding_dim());
    for (int y = 0; y < kPatchGrid; ++y)
      for (int x = 0; x < kPatchGrid; ++x) out.set(x, y, by_x_.at(box.x));
    return out;
  }
  Eigen::VectorXd text_embedding(const std::string&) const override { throw_precondition("unsupported"); }

 private:
  std::map<int, Eigen::VectorXd> by_x_;
};

OracleImage blank_image(int w, int h) { return {ImageD(w, h, 3, 0.5), 0, 0}; }

Eigen::VectorXd as_double(const FeatureMap& m, int x, int y) { return m.at(x, y).cast<double>(); }

}  // namespace

TEST(MaskedAveragePool, SinglePixelIsNormalisedFeature) {
  FeatureMap fc(3, 2, 4);
  const Eigen::Vector4d v(3.0, 0.0, 4.0, 0.0);
  fc.set(1, 1, v);
  const Eigen::VectorXd w = masked_average_pool(rect_mask(3, 2, 1, 1, 2, 2), fc);
  EXPECT_LT((w - v / 5.0).norm(), 1e-7);
}

TEST(MaskedAveragePool, IdenticalUnitFeaturesAverageToThemselves) {
  FeatureMap fc(2, 1, 3);
  const Eigen::Vector3d v = Eigen::Vector3d(1.0, 2.0, 2.0) / 3.0;
  fc.set(0, 0, v);
  fc.set(1, 0, v);
  const Eigen::VectorXd w = masked_average_pool(rect_mask(2, 1, 0, 0, 2, 1), fc);
  EXPECT_LT((w - v).norm(), 1e-7);
  EXPECT_NEAR(w.norm(), 1.0, 1e-7);
}

TEST(MaskedAveragePool, MatchesScalarLoop) {
  std::mt19937_64 rng(3);
  const FeatureMap fc = random_map(4, 4, 5, rng);
  Mask mask(4, 4, 1, 0);
  std::bernoulli_distribution pick(0.5);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) mask(x, y) = pick(rng);
  mask(0, 0) = 1;

  std::vector<double> sum(5, 0.0);
  double count = 0.0;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      if (!mask(x, y)) continue;
      double n2 = 0.0;
      for (int c = 0; c < 5; ++c) n2 += static_cast<double>(fc.at(x, y)[c]) * fc.at(x, y)[c];
      for (int c = 0; c < 5; ++c) sum[c] += fc.at(x, y)[c] / std::sqrt(n2);
      count += 1.0;
    }
  const Eigen::VectorXd w = masked_average_pool(mask, fc);
  for (int c = 0; c < 5; ++c) EXPECT_NEAR(w[c], sum[c] / count, 1e-12);
}

TEST(MaskedAveragePool, SkipsUnassignedAndZeroPixels) {
  FeatureMap fc(3, 1, 2);
  fc.set(0, 0, Eigen::Vector2d(0.0, 0.0));
  fc.set(1, 0, Eigen::Vector2d(0.0, 2.0));
  const Eigen::VectorXd w = masked_average_pool(rect_mask(3, 1, 0, 0, 3, 1), fc);
  EXPECT_LT((w - Eigen::Vector2d(0.0, 1.0)).norm(), 1e-12);
}

TEST(MaskedAveragePool, EmptyEffectiveMaskThrows) {
  FeatureMap fc(2, 2, 3);
  fc.set(0, 0, Eigen::Vector3d(1.0, 0.0, 0.0));
  EXPECT_THROW(masked_average_pool(rect_mask(2, 2, 1, 1, 2, 2), fc), Error);
  EXPECT_THROW(masked_average_pool(rect_mask(3, 2, 0, 0, 1, 1), fc), Error);
}

TEST(MaskedAveragePool, NormAtMostOneAndOneOnlyForEqualFeatures) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureMap fc = random_map(5, 4, 6, rng);
    const Eigen::VectorXd w = masked_average_pool(rect_mask(5, 4, 0, 0, 5, 4), fc);
    EXPECT_LE(w.norm(), 1.0 + 1e-12);
    EXPECT_LT(w.norm(), 1.0 - 1e-6);
  }
}

TEST(ObjectFeatureMap, SingleFullMaskIsConstantWholeImagePool) {
  std::mt19937_64 rng(1);
  const FeatureMap fc = random_map(6, 5, 4, rng);
  DetectionSet det;
  det.boxes.push_back({0, 0, 6, 5});
  det.masks.push_back(rect_mask(6, 5, 0, 0, 6, 5));
  const FeatureMap out = build_object_feature_map(det, fc);
  const Eigen::VectorXd w = masked_average_pool(det.masks[0], fc);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 6; ++x) {
      ASSERT_TRUE(out.assigned(x, y));
      EXPECT_LT((as_double(out, x, y) - w).norm(), 1e-6);
    }
}

TEST(ObjectFeatureMap, NoMasksLeavesMapUnassigned) {
  std::mt19937_64 rng(1);
  const FeatureMap out = build_object_feature_map({}, random_map(4, 3, 2, rng));
  EXPECT_EQ(out.assigned_count(), 0u);
  EXPECT_EQ(out.width(), 4);
  EXPECT_EQ(out.height(), 3);
}

TEST(ObjectFeatureMap, DisjointObjectsCarryTheirOwnEmbedding) {
  const int w = 10, h = 6;
  const Eigen::VectorXd a = unit(0, 8), b = unit(5, 8);
  FeatureMap fc(w, h, 8);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) fc.set(x, y, x < 5 ? a : b);
  DetectionSet det;
  det.masks = {rect_mask(w, h, 1, 1, 4, 5), rect_mask(w, h, 6, 0, 10, 3)};
  det.boxes = {{1, 1, 3, 4}, {6, 0, 4, 3}};
  const FeatureMap out = build_object_feature_map(det, fc);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (det.masks[0](x, y)) {
        EXPECT_EQ(as_double(out, x, y), a);
      } else if (det.masks[1](x, y)) {
        EXPECT_EQ(as_double(out, x, y), b);
      } else {
        EXPECT_FALSE(out.assigned(x, y));
      }
    }
}

TEST(ObjectFeatureMap, SmallerMaskWinsOverlap) {
  const int w = 8, h = 8;
  FeatureMap fc(w, h, 4);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) fc.set(x, y, (x >= 2 && x < 4 && y >= 2 && y < 4) ? unit(1, 4) : unit(0, 4));
  DetectionSet det;
  det.masks = {rect_mask(w, h, 0, 0, 8, 8), rect_mask(w, h, 2, 2, 4, 4)};
  det.boxes = {{0, 0, 8, 8}, {2, 2, 2, 2}};
  const FeatureMap out = build_object_feature_map(det, fc);
  EXPECT_EQ(as_double(out, 3, 3), unit(1, 4));
  const Eigen::VectorXd big = masked_average_pool(det.masks[0], fc);
  EXPECT_LT((as_double(out, 6, 6) - big).norm(), 1e-6);
}

TEST(PartFeatureMap, ConstantPatchPastesConstantRegion) {
  const Eigen::VectorXd v = Eigen::Vector3d(0.2, -0.4, 0.1);
  const ConstantPatchOracle oracle({{2, v}});
  const FeatureMap out = build_part_feature_map({{2, 1, 5, 4}}, blank_image(10, 8), oracle);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 10; ++x) {
      const bool inside = x >= 2 && x < 7 && y >= 1 && y < 5;
      ASSERT_EQ(out.assigned(x, y), inside);
      if (inside) EXPECT_LT((as_double(out, x, y) - v).norm(), 1e-6);
    }
}

TEST(PartFeatureMap, IdenticalOverlappingBoxesAverageToTheSameValue) {
  const Eigen::VectorXd v = Eigen::Vector2d(1.0, -2.0);
  const ConstantPatchOracle oracle({{1, v}});
  const FeatureMap out = build_part_feature_map({{1, 1, 4, 4}, {1, 1, 4, 4}}, blank_image(6, 6), oracle);
  EXPECT_LT((as_double(out, 2, 2) - v).norm(), 1e-6);
}

TEST(PartFeatureMap, OverlapIsMeanOfContributions) {
  const Eigen::VectorXd u = Eigen::Vector2d(1.0, 0.0), v = Eigen::Vector2d(0.0, 3.0);
  const ConstantPatchOracle oracle({{0, u}, {3, v}});
  const FeatureMap out = build_part_feature_map({{0, 0, 5, 4}, {3, 0, 5, 4}}, blank_image(9, 4), oracle);
  EXPECT_LT((as_double(out, 1, 1) - u).norm(), 1e-6);
  EXPECT_LT((as_double(out, 4, 2) - (u + v) / 2.0).norm(), 1e-6);
  EXPECT_LT((as_double(out, 7, 3) - v).norm(), 1e-6);
  EXPECT_FALSE(out.assigned(8, 0));
}

TEST(PartFeatureMap, DegenerateBoxIsSkippedWithWarning) {
  const ConstantPatchOracle oracle({{3, Eigen::Vector2d(1.0, 0.0)}});
  ::testing::internal::CaptureStderr();
  const FeatureMap out = build_part_feature_map({{3, 0, 1, 5}}, blank_image(6, 6), oracle);
  const std::string err = ::testing::internal::GetCapturedStderr();
  EXPECT_NE(err.find("degenerate box"), std::string::npos);
  EXPECT_EQ(out.assigned_count(), 0u);
}

TEST(PartFeatureMap, BoxOutsideImageThrows) {
  const ConstantPatchOracle oracle({{4, Eigen::Vector2d(1.0, 0.0)}});
  EXPECT_THROW(build_part_feature_map({{4, 0, 4, 3}}, blank_image(6, 6), oracle), Error);
}

TEST(Decoder, ZeroWeightsDecodeToZero) {
  const DecoderWeights w = DecoderWeights::zeros(32);
  Latent x;
  x.setConstant(0.7);
  const auto [obj, part] = decode(x, w);
  EXPECT_EQ(obj.norm(), 0.0);
  EXPECT_EQ(part.norm(), 0.0);
}

TEST(Decoder, IdentityActivationIsLinear) {
  DecoderWeights w = DecoderWeights::random(24, 5);
  w.activation = Activation::Identity;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  Latent x;
  for (int k = 0; k < kLatentDim; ++k) x[k] = g(rng);
  const auto [o1, p1] = decode(x, w);
  const auto [o2, p2] = decode(Latent(-2.5 * x), w);
  EXPECT_LT((o2 + 2.5 * o1).norm(), 1e-10);
  EXPECT_LT((p2 + 2.5 * p1).norm(), 1e-10);
}

TEST(Decoder, BufferDecodeMatchesPerLatentDecode) {
  const DecoderWeights w = DecoderWeights::random(12, 8);
  ImageD buffer(3, 2, kLatentDim);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& v : buffer.data()) v = g(rng);
  const DecodedMaps maps = decode_buffer(buffer, w);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x) {
      Latent l;
      for (int k = 0; k < kLatentDim; ++k) l[k] = buffer(x, y, k);
      const auto [obj, part] = decode(l, w);
      EXPECT_LT((as_double(maps.obj, x, y) - obj).norm(), 1e-5);
      EXPECT_LT((as_double(maps.part, x, y) - part).norm(), 1e-5);
    }
}

TEST(Decoder, NonFiniteWeightsRejected) {
  DecoderWeights w = DecoderWeights::random(8, 1);
  w.obj_w(0, 0) = std::nan("");
  EXPECT_THROW(w.validate(), Error);
}

TEST(FeatureDistillation, PrimitivesDecodeToTheirObjectEmbedding) {
  const SyntheticDataset ds = generate(named_scene("reference", 4, 64, 48));
  const SyntheticEmbeddingOracle oracle(ds, {.noise_sigma = 0.05, .noise_seed = 2});
  PipelineConfig config;
  config.fit.iterations = 300;
  const Stage stages[] = {Stage::Fit};
  const PipelineReport report = run_pipeline(ds, oracle, stages, config);
  const Scene& scene = report.scene;

  int labelled = 0, good = 0;
  for (Index i = 0; i < scene.size(); ++i) {
    const int object = scene.labels[i].object;
    if (object < 0) continue;
    ++labelled;
    const auto [obj, part] = decode(scene.primitives[i].feature_latent, scene.decoder);
    const double cosine = obj.normalized().dot(oracle.object_embedding(object));
    good += cosine > 0.9;
  }
  ASSERT_GT(labelled, 100);
  EXPECT_GE(static_cast<double>(good) / labelled, 0.95) << good << " of " << labelled;
}
