#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "splatgrasp/feature_field.hpp"
#include "splatgrasp/synthetic.hpp"

namespace splatgrasp {

struct SyntheticOracleConfig {
  std::uint64_t embedding_seed = 0;  ///< label → hashed_unit_vector(label, embedding_seed)
  double noise_sigma = 0.0;          ///< norm of the additive noise vector per pixel
  std::uint64_t noise_seed = 0;
  int min_detection_pixels = 4;
};

/// Answers from a dataset's ground-truth id maps: object embeddings per pixel for the
/// coarse features, one detection per visible object, part embeddings inside patches.
/// Background pixels carry the embedding of "background". Images are looked up by their
/// (camera, step) tag; the dataset must outlive the oracle.
class SyntheticEmbeddingOracle final : public EmbeddingOracle {
 public:
  SyntheticEmbeddingOracle(const SyntheticDataset& dataset, SyntheticOracleConfig config = {});

  int embedding_dim() const override { return kEmbeddingDim; }
  FeatureMap image_features(const OracleImage& image) const override;
  DetectionSet detections(const OracleImage& image) const override;
  FeatureMap patch_features(const ImageD& patch, const OracleImage& source, const Box& box) const override;
  Eigen::VectorXd text_embedding(const std::string& text) const override;

  Eigen::VectorXd object_embedding(int object) const;
  Eigen::VectorXd part_embedding(int part) const;

 private:
  const SyntheticFrame& lookup(const OracleImage& image) const;

  const SyntheticDataset* dataset_;
  SyntheticOracleConfig config_;
};

/// Reads oracle answers exported to a directory:
///   text.json                        {"text": [C floats], ...}
///   cam<k>/step<t>.fc.fmap           coarse features
///   cam<k>/step<t>.part.fmap         part features at image resolution
///   cam<k>/step<t>.detections.png    16-bit detection ids (0 = none, k + 1 = detection k)
/// Patch queries resample the part map over the box.
class PrecomputedOracle final : public EmbeddingOracle {
 public:
  explicit PrecomputedOracle(std::filesystem::path dir);

  int embedding_dim() const override { return dim_; }
  FeatureMap image_features(const OracleImage& image) const override;
  DetectionSet detections(const OracleImage& image) const override;
  FeatureMap patch_features(const ImageD& patch, const OracleImage& source, const Box& box) const override;
  Eigen::VectorXd text_embedding(const std::string& text) const override;

 private:
  std::filesystem::path dir_;
  std::map<std::string, Eigen::VectorXd> text_;
  int dim_ = kEmbeddingDim;
};

/// Writes `oracle`'s answers for every dataset frame, plus the embeddings of `texts`, in
/// the layout PrecomputedOracle reads.
void export_oracle(const std::filesystem::path& dir, const EmbeddingOracle& oracle, const SyntheticDataset& dataset,
                   const std::vector<std::string>& texts);

}  // namespace splatgrasp
