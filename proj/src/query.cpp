#include "splatgrasp/query.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "splatgrasp/dbscan.hpp"
#include "splatgrasp/detail/parallel.hpp"

namespace splatgrasp {

namespace {

constexpr Index kDecodeChunk = 4096;

SegmentResult segment(const Scene& scene, std::span<const Index> candidates, const QuerySet& query,
                      const EmbeddingOracle& oracle, Branch branch, const ClusterOptions& clustering) {
  const std::vector<double> scores = score_primitives(scene, query, candidates, oracle, branch);
  SegmentResult out;
  for (Index k = 0; k < candidates.size(); ++k) {
    if (scores[k] > query.threshold) {
      out.indices.push_back(candidates[k]);
      out.scores.push_back(scores[k]);
    }
  }
  if (out.indices.empty()) {
    std::vector<Index> order(candidates.size());
    std::iota(order.begin(), order.end(), Index{0});
    const Index top = std::min<Index>(5, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](Index a, Index b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; });
    std::vector<std::pair<Index, double>> best;
    std::ostringstream msg;
    msg << "query '" << query.positive << "': no primitive scores above " << query.threshold << "; best:";
    for (Index k = 0; k < top; ++k) {
      best.emplace_back(candidates[order[k]], scores[order[k]]);
      msg << ' ' << candidates[order[k]] << '=' << scores[order[k]];
    }
    throw EmptyResultError(msg.str(), std::move(best));
  }

  // Sort by index so clustering and output are independent of candidate order.
  std::vector<Index> order(out.indices.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return out.indices[a] < out.indices[b]; });
  IndexSet sorted_indices;
  std::vector<double> sorted_scores;
  for (Index k : order) {
    sorted_indices.push_back(out.indices[k]);
    sorted_scores.push_back(out.scores[k]);
  }
  out.indices = std::move(sorted_indices);
  out.scores = std::move(sorted_scores);

  std::vector<Vec3> centers;
  centers.reserve(out.indices.size());
  for (Index i : out.indices) centers.push_back(scene.primitives[i].center);

  double eps = clustering.eps;
  if (eps <= 0.0) {
    std::vector<double> nn = nearest_neighbor_distances(centers);
    std::erase_if(nn, [](double d) { return !std::isfinite(d); });
    if (!nn.empty()) {
      const auto mid = nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2);
      std::nth_element(nn.begin(), mid, nn.end());
      eps = clustering.eps_scale * *mid;
    }
    // Coincident centres give a zero median; any positive radius then clusters them.
    if (!(eps > 0.0)) eps = 1e-9;
  }
  out.eps = eps;

  const Clustering c = dbscan(centers, eps, clustering.min_pts);
  out.cluster_count = c.cluster_count();
  out.cluster_labels = c.labels;
  int keep = kNoiseLabel;
  if (clustering.largest_only && c.cluster_count() > 0)
    keep = static_cast<int>(std::max_element(c.sizes.begin(), c.sizes.end()) - c.sizes.begin());
  for (Index k = 0; k < out.indices.size(); ++k) {
    const int l = c.labels[k];
    if (l == kNoiseLabel) continue;
    if (clustering.largest_only && l != keep) continue;
    out.cluster_kept.push_back(out.indices[k]);
  }
  return out;
}

}  // namespace

void QuerySet::validate() const {
  if (positive.empty()) throw_precondition("query: empty positive text");
  if (negatives.empty()) throw_precondition("query: at least one negative text is required");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw_precondition("query: temperature must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw_precondition("query: threshold must lie in (0, 1)");
}

double positive_probability(std::span<const double> sims, double temperature) {
  if (sims.empty()) throw_precondition("positive_probability: empty similarity list");
  const double top = *std::max_element(sims.begin(), sims.end());
  double denom = 0.0;
  for (double s : sims) denom += std::exp((s - top) / temperature);
  return std::exp((sims[0] - top) / temperature) / denom;
}

std::vector<double> score_primitives(const Scene& scene, const QuerySet& query, std::span<const Index> candidates,
                                     const EmbeddingOracle& oracle, Branch branch) {
  query.validate();
  if (candidates.empty()) throw_precondition("score_primitives: empty candidate set");
  for (Index i : candidates)
    if (i >= scene.size()) throw_precondition("score_primitives: candidate index out of range");
  scene.decoder.validate();

  const int dim = scene.decoder.output_dim();
  std::vector<std::string> words{query.positive};
  words.insert(words.end(), query.negatives.begin(), query.negatives.end());
  Eigen::MatrixXd text(dim, static_cast<Eigen::Index>(words.size()));
  for (Index w = 0; w < words.size(); ++w) {
    const Eigen::VectorXd e = oracle.text_embedding(words[w]);
    if (e.size() != dim) throw_precondition("score_primitives: text embedding dimension differs from decoder output");
    const double n = e.norm();
    text.col(static_cast<Eigen::Index>(w)) = n > 0.0 ? Eigen::VectorXd(e / n) : e;
  }

  std::vector<double> scores(candidates.size());
  const Index chunks = (candidates.size() + kDecodeChunk - 1) / kDecodeChunk;
  detail::parallel_for(chunks, [&](Index chunk) {
    const Index begin = chunk * kDecodeChunk;
    const Index end = std::min(candidates.size(), begin + kDecodeChunk);
    Eigen::MatrixXd latents(kLatentDim, static_cast<Eigen::Index>(end - begin));
    for (Index k = begin; k < end; ++k)
      latents.col(static_cast<Eigen::Index>(k - begin)) = scene.primitives[candidates[k]].feature_latent;
    const DecodedBatch batch = decode(latents, scene.decoder);
    const Eigen::MatrixXd& feats = branch == Branch::Object ? batch.obj : batch.part;
    const Eigen::MatrixXd dots = text.transpose() * feats;
    std::vector<double> sims(words.size());
    for (Index k = begin; k < end; ++k) {
      const auto col = static_cast<Eigen::Index>(k - begin);
      const double n = feats.col(col).norm();
      for (Index w = 0; w < words.size(); ++w)
        sims[w] = n > 0.0 ? dots(static_cast<Eigen::Index>(w), col) / n : 0.0;
      scores[k] = positive_probability(sims, query.temperature);
    }
  });
  return scores;
}

SegmentResult segment_object(const Scene& scene, const QuerySet& query, const EmbeddingOracle& oracle,
                             const ClusterOptions& clustering) {
  IndexSet all(scene.size());
  std::iota(all.begin(), all.end(), Index{0});
  return segment(scene, all, query, oracle, Branch::Object, clustering);
}

SegmentResult segment_part(const Scene& scene, const SegmentResult& object, const QuerySet& part_query,
                           const EmbeddingOracle& oracle, const ClusterOptions& clustering) {
  if (object.cluster_kept.empty()) throw_precondition("segment_part: object segmentation is empty");
  return segment(scene, object.cluster_kept, part_query, oracle, Branch::Part, clustering);
}

}  // namespace splatgrasp
