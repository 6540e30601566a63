#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "splatgrasp/decoder.hpp"
#include "splatgrasp/image.hpp"

namespace splatgrasp {

/// Dense embedding image with a per-pixel validity flag. Stored as float to keep
/// 768-channel maps affordable.
class FeatureMap {
 public:
  FeatureMap() = default;
  /// Fully unassigned map.
  FeatureMap(int width, int height, int channels = kEmbeddingDim);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }

  bool assigned(int x, int y) const { return assigned_(x, y) != 0; }
  const Mask& assigned_mask() const noexcept { return assigned_; }
  std::size_t assigned_count() const { return count_nonzero(assigned_); }

  Eigen::Map<const Eigen::VectorXf> at(int x, int y) const {
    return {data_.data() + offset(x, y), channels_};
  }
  Eigen::Map<Eigen::VectorXf> at(int x, int y) { return {data_.data() + offset(x, y), channels_}; }
  /// Stores `v` and marks the pixel assigned.
  void set(int x, int y, const Eigen::VectorXd& v);
  void unassign(int x, int y);

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }
  Mask& assigned_mask_mut() noexcept { return assigned_; }

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = kEmbeddingDim;
  std::vector<float> data_;
  Mask assigned_;
};

/// Axis-aligned pixel box: columns [x, x + w), rows [y, y + h).
struct Box {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

struct DetectionSet {
  std::vector<Box> boxes;
  std::vector<Mask> masks;
};

/// An image handed to an oracle, tagged with where it came from so that offline or
/// synthetic oracles can look up their answers.
struct OracleImage {
  ImageD color;
  int camera = -1;
  int step = 0;
};

inline constexpr int kPatchSize = 224;
inline constexpr int kPatchGrid = 28;

/// Stand-in for the pretrained networks: coarse image features, class-agnostic
/// detections, square-patch features and text embeddings. Implementations are
/// deterministic per input.
class EmbeddingOracle {
 public:
  virtual ~EmbeddingOracle() = default;
  virtual int embedding_dim() const = 0;
  virtual FeatureMap image_features(const OracleImage& image) const = 0;
  virtual DetectionSet detections(const OracleImage& image) const = 0;
  /// `patch` is the 224 x 224 resampled crop of `source` inside `box`; returns 28 x 28 x C.
  virtual FeatureMap patch_features(const ImageD& patch, const OracleImage& source, const Box& box) const = 0;
  /// Unit-norm embedding.
  virtual Eigen::VectorXd text_embedding(const std::string& text) const = 0;
};

/// Mean of unit-normalised assigned features under `mask`; zero-norm features are skipped.
/// Throws when no pixel contributes.
Eigen::VectorXd masked_average_pool(const Mask& mask, const FeatureMap& fc);

/// Paints each mask region with its pooled vector. Where masks overlap, the smaller mask wins.
FeatureMap build_object_feature_map(const DetectionSet& detections, const FeatureMap& fc);

/// Crop, resample to 224 x 224, query the oracle, resample the 28 x 28 result back to
/// the box and paste; overlapping boxes are averaged. Boxes under 2 px wide or tall are skipped.
FeatureMap build_part_feature_map(const std::vector<Box>& boxes, const OracleImage& image,
                                  const EmbeddingOracle& oracle);

/// Bilinear, pixel-centre aligned resampling of every channel (assignment ignored: the
/// result is fully assigned).
FeatureMap resize_features(const FeatureMap& map, int width, int height);

/// Per-pixel decode of an H x W x 16 latent buffer into object and part maps.
struct DecodedMaps {
  FeatureMap obj;
  FeatureMap part;
};
DecodedMaps decode_buffer(const ImageD& latents, const DecoderWeights& weights);

/// Deterministic unit vector in R^dim for `text`, shared by the synthetic oracle and its
/// ground-truth embedding table.
Eigen::VectorXd hashed_unit_vector(const std::string& text, std::uint64_t seed, int dim = kEmbeddingDim);

}  // namespace splatgrasp
