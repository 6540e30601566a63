#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "splatgrasp/feature_field.hpp"
#include "splatgrasp/scene.hpp"

namespace splatgrasp {

struct QuerySet {
  std::string positive;
  std::vector<std::string> negatives{"objects", "things"};
  double temperature = 0.1;
  double threshold = 0.6;  ///< τ; a primitive passes when its score is strictly above

  /// Throws unless there is a positive text, at least one negative, temperature > 0 and τ in (0, 1).
  void validate() const;
};

enum class Branch { Object, Part };

struct ClusterOptions {
  /// DBSCAN radius; 0 selects `eps_scale` times the median nearest-neighbour distance.
  double eps = 0.0;
  double eps_scale = 2.0;
  int min_pts = 10;
  /// Keep only the largest surviving cluster instead of all of them.
  bool largest_only = false;
};

struct SegmentResult {
  IndexSet indices;             ///< primitives scoring above τ, ascending
  std::vector<double> scores;   ///< aligned with `indices`
  IndexSet cluster_kept;        ///< members of retained clusters, ascending
  std::vector<int> cluster_labels;  ///< aligned with `indices`; kNoiseLabel for dropped outliers
  int cluster_count = 0;
  double eps = 0.0;             ///< DBSCAN radius actually used
};

/// Thrown when nothing passes τ. Carries the best five (index, score) pairs.
class EmptyResultError : public Error {
 public:
  EmptyResultError(const std::string& what, std::vector<std::pair<Index, double>> top)
      : Error(ErrorKind::Numerical, what), top_(std::move(top)) {}
  const std::vector<std::pair<Index, double>>& top_scores() const noexcept { return top_; }

 private:
  std::vector<std::pair<Index, double>> top_;
};

/// Softmax probability of entry 0 of `sims / temperature`; invariant to adding a constant to `sims`.
double positive_probability(std::span<const double> sims, double temperature);

/// Per-candidate positive probability. Latents are decoded per primitive with the scene's
/// decoder; cosine similarity against each text embedding (zero vectors score 0).
std::vector<double> score_primitives(const Scene& scene, const QuerySet& query, std::span<const Index> candidates,
                                     const EmbeddingOracle& oracle, Branch branch = Branch::Object);

/// Threshold + DBSCAN over all primitives with the object branch.
SegmentResult segment_object(const Scene& scene, const QuerySet& query, const EmbeddingOracle& oracle,
                             const ClusterOptions& clustering = {});

/// Same pipeline restricted to `object.cluster_kept`, using the part branch.
SegmentResult segment_part(const Scene& scene, const SegmentResult& object, const QuerySet& part_query,
                           const EmbeddingOracle& oracle, const ClusterOptions& clustering = {});

}  // namespace splatgrasp
