#include "splatgrasp/decoder.hpp"

#include <cmath>
#include <random>

namespace splatgrasp {

Index DecoderWeights::parameter_count() const {
  return static_cast<Index>(trunk_w.size() + trunk_b.size() + obj_w.size() + obj_b.size() +
                            part_w.size() + part_b.size());
}

DecoderWeights DecoderWeights::zeros(int output_dim, int hidden) {
  DecoderWeights w;
  w.trunk_w = Eigen::MatrixXd::Zero(hidden, kLatentDim);
  w.trunk_b = Eigen::VectorXd::Zero(hidden);
  w.obj_w = Eigen::MatrixXd::Zero(output_dim, hidden);
  w.obj_b = Eigen::VectorXd::Zero(output_dim);
  w.part_w = Eigen::MatrixXd::Zero(output_dim, hidden);
  w.part_b = Eigen::VectorXd::Zero(output_dim);
  return w;
}

DecoderWeights DecoderWeights::random(int output_dim, std::uint64_t seed, int hidden) {
  DecoderWeights w = zeros(output_dim, hidden);
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](Eigen::MatrixXd& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  };
  glorot(w.trunk_w);
  glorot(w.obj_w);
  glorot(w.part_w);
  return w;
}

void DecoderWeights::validate() const {
  const auto h = trunk_b.size();
  const auto c = obj_b.size();
  if (trunk_w.rows() != h || trunk_w.cols() != kLatentDim || obj_w.rows() != c || obj_w.cols() != h ||
      part_w.rows() != c || part_w.cols() != h || part_b.size() != c || h == 0 || c == 0) {
    throw_precondition("decoder: inconsistent weight shapes");
  }
  if (!trunk_w.allFinite() || !trunk_b.allFinite() || !obj_w.allFinite() || !obj_b.allFinite() ||
      !part_w.allFinite() || !part_b.allFinite()) {
    throw_numerical("decoder: non-finite weights");
  }
}

DecodedBatch decode(const Eigen::MatrixXd& latents, const DecoderWeights& w) {
  if (latents.rows() != kLatentDim) throw_precondition("decode: latents must have 16 rows");
  DecodedBatch out;
  out.hidden_pre = (w.trunk_w * latents).colwise() + w.trunk_b;
  out.hidden = w.activation == Activation::Tanh ? Eigen::MatrixXd(out.hidden_pre.array().tanh())
                                                : out.hidden_pre;
  out.obj = (w.obj_w * out.hidden).colwise() + w.obj_b;
  out.part = (w.part_w * out.hidden).colwise() + w.part_b;
  return out;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> decode(const Latent& latent, const DecoderWeights& w) {
  DecodedBatch b = decode(Eigen::MatrixXd(latent), w);
  return {b.obj.col(0), b.part.col(0)};
}

}  // namespace splatgrasp
