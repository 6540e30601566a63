#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "splatgrasp/dbscan.hpp"
#include "splatgrasp/query.hpp"
#include "support/reference.hpp"
#include "support/table_oracle.hpp"

using namespace splatgrasp;
using namespace splatgrasp::testing;

namespace {

using Partition = std::set<std::set<Index>>;

// Clusters as a set of sets of point identities, plus the noise set keyed the same way.
std::pair<Partition, std::set<Index>> partition_of(const std::vector<int>& labels, const std::vector<Index>& ids) {
  std::map<int, std::set<Index>> groups;
  std::set<Index> noise;
  for (Index k = 0; k < labels.size(); ++k) {
    if (labels[k] < 0)
      noise.insert(ids[k]);
    else
      groups[labels[k]].insert(ids[k]);
  }
  Partition p;
  for (auto& [l, g] : groups) p.insert(g);
  return {p, noise};
}

std::vector<Vec3> blob(const Vec3& centre, int n, double spread, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, spread);
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) out.push_back(centre + Vec3(g(rng), g(rng), g(rng)));
  return out;
}

std::vector<Index> iota_ids(Index n) {
  std::vector<Index> ids(n);
  std::iota(ids.begin(), ids.end(), Index{0});
  return ids;
}

TableOracle basis_oracle() {
  return TableOracle({{"mug", unit(0)}, {"box", unit(1)}, {"handle", unit(2)}, {"body", unit(3)},
                      {"objects", unit(4)}, {"things", unit(5)}});
}

// Primitives on a small grid around `centre`, latent = `latent` (+ noise).
void add_object(Scene& s, const Vec3& centre, const Eigen::VectorXd& latent, int side, double pitch,
                std::mt19937_64& rng, double noise = 0.0) {
  std::normal_distribution<double> g(0.0, noise);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j)
      for (int k = 0; k < side; ++k) {
        GaussianPrimitive p;
        p.center = centre + pitch * Vec3(i, j, k);
        for (int c = 0; c < kLatentDim; ++c) p.feature_latent[c] = latent[c] + (noise > 0 ? g(rng) : 0.0);
        s.primitives.push_back(p);
      }
}

}  // namespace

TEST(Dbscan, AllWithinEpsIsOneCluster) {
  std::vector<Vec3> pts{{0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}, {0.05, 0.05, 0.05}};
  const Clustering c = dbscan(pts, 0.5, 4);
  EXPECT_EQ(c.cluster_count(), 1);
  for (int l : c.labels) EXPECT_EQ(l, 0);
}

TEST(Dbscan, IsolatedPointIsNoise) {
  std::vector<Vec3> pts{{0, 0, 0}};
  EXPECT_EQ(dbscan(pts, 1.0, 2).labels[0], kNoiseLabel);
  EXPECT_EQ(dbscan(pts, 1.0, 1).labels[0], 0);
}

TEST(Dbscan, RejectsBadParameters) {
  std::vector<Vec3> pts{{0, 0, 0}};
  EXPECT_THROW(dbscan(pts, 0.0, 2), Error);
  EXPECT_THROW(dbscan(pts, 1.0, 0), Error);
  EXPECT_TRUE(dbscan(std::vector<Vec3>{}, 1.0, 2).labels.empty());
}

TEST(Dbscan, TwoBlobsAndStraysMatchReference) {
  std::mt19937_64 rng(5);
  const double eps = 0.05;
  auto pts = blob(Vec3::Zero(), 20, 0.01, rng);
  const auto far = blob(Vec3(100 * eps, 0, 0), 20, 0.01, rng);
  pts.insert(pts.end(), far.begin(), far.end());
  std::uniform_real_distribution<double> u(-20 * eps, 120 * eps);
  for (int i = 0; i < 5; ++i) pts.push_back(Vec3(u(rng), 30 * eps + 10 * eps * i, u(rng)));

  const Clustering c = dbscan(pts, eps, 5);
  EXPECT_EQ(c.cluster_count(), 2);
  EXPECT_EQ(std::count(c.labels.begin(), c.labels.end(), kNoiseLabel), 5);
  const auto ids = iota_ids(pts.size());
  EXPECT_EQ(partition_of(c.labels, ids), partition_of(reference_dbscan(pts, eps, 5), ids));
}

TEST(DbscanProperty, MatchesReferenceOnRandomClouds) {
  for (int trial = 0; trial < 30; ++trial) {
    std::mt19937_64 rng(100 + trial);
    std::vector<Vec3> pts;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int b = 0; b < 4; ++b) {
      const auto more = blob(Vec3(u(rng), u(rng), u(rng)), 30, 0.03, rng);
      pts.insert(pts.end(), more.begin(), more.end());
    }
    for (int i = 0; i < 20; ++i) pts.push_back(Vec3(u(rng), u(rng), u(rng)));
    const double eps = 0.02 + 0.06 * u(rng);
    const int min_pts = 2 + trial % 8;
    const auto ids = iota_ids(pts.size());
    EXPECT_EQ(partition_of(dbscan(pts, eps, min_pts).labels, ids), partition_of(reference_dbscan(pts, eps, min_pts), ids))
        << "trial " << trial;
  }
}

TEST(DbscanProperty, PartitionIndependentOfInputOrder) {
  for (int trial = 0; trial < 30; ++trial) {
    std::mt19937_64 rng(200 + trial);
    std::vector<Vec3> pts;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int b = 0; b < 3; ++b) {
      const auto more = blob(Vec3(u(rng), u(rng), u(rng)), 40, 0.05, rng);
      pts.insert(pts.end(), more.begin(), more.end());
    }
    for (int i = 0; i < 30; ++i) pts.push_back(Vec3(u(rng), u(rng), u(rng)));
    const auto ids = iota_ids(pts.size());
    const auto base = partition_of(dbscan(pts, 0.06, 6).labels, ids);

    std::vector<Index> perm = ids;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Vec3> shuffled;
    for (Index k : perm) shuffled.push_back(pts[k]);
    EXPECT_EQ(partition_of(dbscan(shuffled, 0.06, 6).labels, perm), base) << "trial " << trial;
  }
}

TEST(Dbscan, NearestNeighbourDistancesMatchBruteForce) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 300; ++i) pts.push_back(Vec3(u(rng), u(rng), 0.1 * u(rng)));
  pts.push_back(Vec3(50, 50, 50));
  const auto nn = nearest_neighbor_distances(pts);
  for (Index i = 0; i < pts.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < pts.size(); ++j)
      if (j != i) best = std::min(best, (pts[i] - pts[j]).norm());
    EXPECT_DOUBLE_EQ(nn[i], best);
  }
}

TEST(Softmax, TwoClassValue) {
  const double sims[] = {1.0, 0.0};
  EXPECT_NEAR(positive_probability(sims, 1.0), std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  EXPECT_NEAR(positive_probability(sims, 1.0), 0.7311, 1e-4);
}

TEST(SoftmaxProperty, ShiftInvariantAndNormalised) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> sims(2 + trial % 5);
    for (double& s : sims) s = u(rng);
    const double t = 0.05 + std::abs(u(rng));
    const double shift = 10.0 * u(rng);
    std::vector<double> shifted = sims;
    for (double& s : shifted) s += shift;
    EXPECT_NEAR(positive_probability(sims, t), positive_probability(shifted, t), 1e-12);
    double total = 0.0;
    for (Index k = 0; k < sims.size(); ++k) {
      std::vector<double> rotated = sims;
      std::rotate(rotated.begin(), rotated.begin() + static_cast<std::ptrdiff_t>(k), rotated.end());
      total += positive_probability(rotated, t);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Query, ValidateRejectsBadSets) {
  QuerySet q;
  EXPECT_THROW(q.validate(), Error);
  q.positive = "mug";
  EXPECT_NO_THROW(q.validate());
  q.negatives.clear();
  EXPECT_THROW(q.validate(), Error);
  q.negatives = {"objects"};
  q.temperature = 0.0;
  EXPECT_THROW(q.validate(), Error);
  q.temperature = 1.0;
  q.threshold = 1.0;
  EXPECT_THROW(q.validate(), Error);
}

TEST(Query, DuplicateEmbeddingSplitsEvenly) {
  Scene s;
  s.decoder = passthrough_decoder();
  GaussianPrimitive p;
  p.feature_latent = unit(0) + 0.3 * unit(7);
  s.primitives.push_back(p);
  QuerySet q;
  q.positive = "mug";
  q.negatives = {"mug"};
  q.temperature = 1.0;
  const TableOracle oracle = basis_oracle();
  const IndexSet all{0};
  EXPECT_DOUBLE_EQ(score_primitives(s, q, all, oracle)[0], 0.5);
}

TEST(Query, ScoreMatchesHandComputedSoftmax) {
  Scene s;
  s.decoder = passthrough_decoder();
  GaussianPrimitive p;
  p.feature_latent = 3.0 * unit(0) + 4.0 * unit(4);  // cos 0.6 with "mug", 0.8 with "objects"
  s.primitives.push_back(p);
  QuerySet q;
  q.positive = "mug";
  q.temperature = 0.5;
  const TableOracle oracle = basis_oracle();
  const IndexSet all{0};
  const double e0 = std::exp(0.6 / 0.5), e1 = std::exp(0.8 / 0.5), e2 = std::exp(0.0);
  EXPECT_NEAR(score_primitives(s, q, all, oracle)[0], e0 / (e0 + e1 + e2), 1e-12);
  EXPECT_THROW(score_primitives(s, q, IndexSet{}, oracle), Error);
  EXPECT_THROW(score_primitives(s, q, IndexSet{3}, oracle), Error);
}

TEST(Query, OrthogonalEmbeddingsSeparateObjects) {
  std::mt19937_64 rng(1);
  Scene s;
  s.decoder = passthrough_decoder();
  add_object(s, Vec3(0, 0, 1), unit(0), 5, 0.01, rng, 0.01);
  add_object(s, Vec3(0.3, 0, 1), unit(1), 5, 0.01, rng, 0.01);
  QuerySet q;
  q.positive = "mug";
  const TableOracle oracle = basis_oracle();
  IndexSet all(s.size());
  std::iota(all.begin(), all.end(), Index{0});
  const auto scores = score_primitives(s, q, all, oracle);
  for (Index i = 0; i < 125; ++i) EXPECT_GT(scores[i], 0.6);
  for (Index i = 125; i < 250; ++i) EXPECT_LT(scores[i], 0.6);
}

TEST(Query, AllBelowThresholdReportsTopScores) {
  std::mt19937_64 rng(2);
  Scene s;
  s.decoder = passthrough_decoder();
  add_object(s, Vec3::Zero(), unit(1), 2, 0.01, rng);
  QuerySet q;
  q.positive = "mug";
  const TableOracle oracle = basis_oracle();
  try {
    segment_object(s, q, oracle);
    FAIL() << "expected EmptyResultError";
  } catch (const EmptyResultError& e) {
    EXPECT_EQ(e.top_scores().size(), 5u);
    EXPECT_EQ(e.kind(), ErrorKind::Numerical);
    for (Index k = 1; k < 5; ++k) EXPECT_GE(e.top_scores()[k - 1].second, e.top_scores()[k].second);
  }
}

TEST(Query, StraysBeyondEpsAreDropped) {
  std::mt19937_64 rng(3);
  Scene s;
  s.decoder = passthrough_decoder();
  add_object(s, Vec3(0, 0, 1), unit(0), 5, 0.01, rng);
  for (int i = 0; i < 3; ++i) {
    GaussianPrimitive p;
    p.center = Vec3(1.0 + i, 1.0, 1.0);  // hundreds of eps away
    p.feature_latent = unit(0);
    s.primitives.push_back(p);
  }
  QuerySet q;
  q.positive = "mug";
  const TableOracle oracle = basis_oracle();
  const SegmentResult r = segment_object(s, q, oracle);
  EXPECT_EQ(r.indices.size(), 128u);
  EXPECT_NEAR(r.eps, 0.02, 1e-12);
  ASSERT_EQ(r.cluster_kept.size(), 125u);
  for (Index i : r.cluster_kept) EXPECT_LT(i, 125u);

  std::vector<Vec3> centers;
  for (Index i : r.indices) centers.push_back(s.primitives[i].center);
  const auto ids = iota_ids(centers.size());
  EXPECT_EQ(partition_of(r.cluster_labels, ids), partition_of(reference_dbscan(centers, r.eps, 10), ids));
}

TEST(Query, DuplicateObjectsKeepBothUnlessLargestOnly) {
  std::mt19937_64 rng(4);
  Scene s;
  s.decoder = passthrough_decoder();
  add_object(s, Vec3(0, 0, 1), unit(0), 4, 0.01, rng);
  add_object(s, Vec3(0.5, 0, 1), unit(0), 5, 0.01, rng);
  QuerySet q;
  q.positive = "mug";
  const TableOracle oracle = basis_oracle();
  const SegmentResult both = segment_object(s, q, oracle);
  EXPECT_EQ(both.cluster_count, 2);
  EXPECT_EQ(both.cluster_kept.size(), 64u + 125u);
  ClusterOptions largest;
  largest.largest_only = true;
  const SegmentResult one = segment_object(s, q, oracle, largest);
  ASSERT_EQ(one.cluster_kept.size(), 125u);
  EXPECT_EQ(one.cluster_kept.front(), 64u);
}

TEST(Query, PartQueryEqualToObjectWithConstantFieldReturnsObject) {
  std::mt19937_64 rng(5);
  Scene s;
  s.decoder = passthrough_decoder();
  add_object(s, Vec3(0, 0, 1), unit(0), 4, 0.01, rng);
  add_object(s, Vec3(0.5, 0, 1), unit(1), 4, 0.01, rng);
  QuerySet q;
  q.positive = "mug";
  const TableOracle oracle = basis_oracle();
  const SegmentResult obj = segment_object(s, q, oracle);
  const SegmentResult part = segment_part(s, obj, q, oracle);
  EXPECT_EQ(part.cluster_kept, obj.cluster_kept);
}

TEST(Query, PartQuerySplitsObjectThroughPartBranch) {
  std::mt19937_64 rng(6);
  Scene s;
  // Part branch reads latent dims 8/9 into the "handle"/"body" directions.
  Eigen::Matrix<double, kLatentDim, kLatentDim> part_map = Eigen::Matrix<double, kLatentDim, kLatentDim>::Zero();
  part_map(2, 8) = 1.0;
  part_map(3, 9) = 1.0;
  s.decoder = passthrough_decoder(part_map);
  add_object(s, Vec3(0, 0, 1), unit(0) + unit(9), 5, 0.01, rng);     // body
  add_object(s, Vec3(0.05, 0, 1), unit(0) + unit(8), 3, 0.01, rng);  // handle
  add_object(s, Vec3(0.6, 0, 1), unit(1) + unit(8), 3, 0.01, rng);   // handle-like, wrong object
  const TableOracle oracle = basis_oracle();
  QuerySet obj_q;
  obj_q.positive = "mug";
  const SegmentResult obj = segment_object(s, obj_q, oracle);
  EXPECT_EQ(obj.cluster_kept.size(), 152u);
  QuerySet part_q;
  part_q.positive = "handle";
  const SegmentResult part = segment_part(s, obj, part_q, oracle);
  ASSERT_EQ(part.cluster_kept.size(), 27u);
  for (Index i : part.cluster_kept) {
    EXPECT_GE(i, 125u);
    EXPECT_LT(i, 152u);
  }
  EXPECT_THROW(segment_part(s, SegmentResult{}, part_q, oracle), Error);
}

TEST(QueryProperty, RaisingThresholdNeverGrowsSelection) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const TableOracle oracle = basis_oracle();
  const std::vector<std::string> words{"mug", "box", "handle", "body", "objects", "things"};
  for (int trial = 0; trial < 100; ++trial) {
    Scene s;
    s.decoder = passthrough_decoder();
    for (int i = 0; i < 60; ++i) {
      GaussianPrimitive p;
      p.center = Vec3(u(rng), u(rng), u(rng));
      for (int c = 0; c < kLatentDim; ++c) p.feature_latent[c] = g(rng);
      s.primitives.push_back(p);
    }
    QuerySet q;
    q.positive = words[trial % 4];
    q.temperature = 0.05 + 0.5 * u(rng);
    const double lo = 0.05 + 0.85 * u(rng);
    const double hi = lo + (0.99 - lo) * u(rng);
    auto selection = [&](double tau) -> IndexSet {
      q.threshold = tau;
      try {
        return segment_object(s, q, oracle).indices;
      } catch (const EmptyResultError&) {
        return {};
      }
    };
    const IndexSet a = selection(lo);
    const IndexSet b = selection(hi);
    EXPECT_TRUE(std::includes(a.begin(), a.end(), b.begin(), b.end())) << "trial " << trial;
  }
}

TEST(QueryProperty, PartResultContainedInObject) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  const TableOracle oracle = basis_oracle();
  for (int trial = 0; trial < 20; ++trial) {
    Scene s;
    Eigen::Matrix<double, kLatentDim, kLatentDim> m;
    for (int i = 0; i < kLatentDim * kLatentDim; ++i) m.data()[i] = g(rng);
    s.decoder = passthrough_decoder(m);
    add_object(s, Vec3(0, 0, 1), unit(0), 5, 0.01, rng, 0.3);
    add_object(s, Vec3(0.3, 0, 1), unit(1), 5, 0.01, rng, 0.3);
    QuerySet obj_q;
    obj_q.positive = "mug";
    obj_q.threshold = 0.3;
    const SegmentResult obj = segment_object(s, obj_q, oracle);
    if (obj.cluster_kept.empty()) continue;
    QuerySet part_q;
    part_q.positive = "handle";
    part_q.threshold = 0.2;
    try {
      const SegmentResult part = segment_part(s, obj, part_q, oracle);
      EXPECT_TRUE(std::includes(obj.cluster_kept.begin(), obj.cluster_kept.end(), part.indices.begin(),
                                part.indices.end()));
    } catch (const EmptyResultError&) {
    }
  }
}
