#pragma once

#include <map>
#include <string>

#include "splatgrasp/feature_field.hpp"

namespace splatgrasp::testing {

/// Text embeddings from a fixed table; image calls are unsupported.
class TableOracle : public EmbeddingOracle {
 public:
  explicit TableOracle(std::map<std::string, Eigen::VectorXd> table) : table_(std::move(table)) {}

  int embedding_dim() const override { return static_cast<int>(table_.begin()->second.size()); }
  FeatureMap image_features(const OracleImage&) const override { throw_precondition("TableOracle: no images"); }
  DetectionSet detections(const OracleImage&) const override { throw_precondition("TableOracle: no images"); }
  FeatureMap patch_features(const ImageD&, const OracleImage&, const Box&) const override {
    throw_precondition("TableOracle: no images");
  }
  Eigen::VectorXd text_embedding(const std::string& text) const override {
    const auto it = table_.find(text);
    if (it == table_.end()) throw_precondition("TableOracle: unknown text " + text);
    return it->second;
  }

 private:
  std::map<std::string, Eigen::VectorXd> table_;
};

/// Identity-activation decoder whose object branch returns the latent itself (C = 16) and
/// whose part branch returns `part_map` times the latent.
inline DecoderWeights passthrough_decoder(const Eigen::Matrix<double, kLatentDim, kLatentDim>& part_map =
                                              Eigen::Matrix<double, kLatentDim, kLatentDim>::Identity()) {
  DecoderWeights w = DecoderWeights::zeros(kLatentDim);
  w.activation = Activation::Identity;
  w.trunk_w.setZero();
  w.trunk_w.topRows(kLatentDim).setIdentity();
  w.obj_w.setZero();
  w.obj_w.leftCols(kLatentDim).setIdentity();
  w.part_w.setZero();
  w.part_w.leftCols(kLatentDim) = part_map;
  return w;
}

inline Eigen::VectorXd unit(int k, int dim = kLatentDim) { return Eigen::VectorXd::Unit(dim, k); }

}  // namespace splatgrasp::testing
