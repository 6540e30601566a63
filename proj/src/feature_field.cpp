#include "splatgrasp/feature_field.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace splatgrasp {

FeatureMap::FeatureMap(int width, int height, int channels)
    : width_(width), height_(height), channels_(channels),
      data_(static_cast<std::size_t>(width) * height * channels, 0.0f), assigned_(width, height, 1, 0) {
  if (channels <= 0) throw_precondition("feature map: channel count must be positive");
}

void FeatureMap::set(int x, int y, const Eigen::VectorXd& v) {
  if (v.size() != channels_) throw_precondition("feature map: vector length differs from channel count");
  at(x, y) = v.cast<float>();
  assigned_(x, y) = 1;
}

void FeatureMap::unassign(int x, int y) {
  at(x, y).setZero();
  assigned_(x, y) = 0;
}

Eigen::VectorXd masked_average_pool(const Mask& mask, const FeatureMap& fc) {
  if (mask.width() != fc.width() || mask.height() != fc.height())
    throw_precondition("masked_average_pool: mask and feature map sizes differ");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(fc.channels());
  std::size_t count = 0;
  for (int y = 0; y < fc.height(); ++y) {
    for (int x = 0; x < fc.width(); ++x) {
      if (!mask(x, y) || !fc.assigned(x, y)) continue;
      const Eigen::VectorXd f = fc.at(x, y).cast<double>();
      const double n = f.norm();
      if (n == 0.0) continue;
      sum += f / n;
      ++count;
    }
  }
  if (count == 0) throw_precondition("masked_average_pool: mask selects no assigned non-zero feature");
  return sum / static_cast<double>(count);
}

FeatureMap build_object_feature_map(const DetectionSet& detections, const FeatureMap& fc) {
  FeatureMap out(fc.width(), fc.height(), fc.channels());
  const std::size_t n = detections.masks.size();
  std::vector<std::size_t> area(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Mask& m = detections.masks[k];
    if (m.width() != fc.width() || m.height() != fc.height())
      throw_precondition("build_object_feature_map: mask size differs from feature map");
    area[k] = count_nonzero(m);
  }
  // Paint largest first so that smaller masks overwrite; equal areas keep detection order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return area[a] > area[b]; });
  for (std::size_t k : order) {
    const Mask& m = detections.masks[k];
    Eigen::VectorXd pooled;
    try {
      pooled = masked_average_pool(m, fc);
    } catch (const Error&) {
      warn("build_object_feature_map: mask without features skipped");
      continue;
    }
    for (int y = 0; y < fc.height(); ++y)
      for (int x = 0; x < fc.width(); ++x)
        if (m(x, y)) out.set(x, y, pooled);
  }
  return out;
}

FeatureMap resize_features(const FeatureMap& map, int width, int height) {
  if (width <= 0 || height <= 0 || map.empty()) throw_precondition("resize_features: empty target or source");
  FeatureMap out(width, height, map.channels());
  const double sx = static_cast<double>(map.width()) / width;
  const double sy = static_cast<double>(map.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, map.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(src_y));
    const int y1 = std::min(y0 + 1, map.height() - 1);
    const float fy = static_cast<float>(src_y - y0);
    for (int x = 0; x < width; ++x) {
      const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, map.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(src_x));
      const int x1 = std::min(x0 + 1, map.width() - 1);
      const float fx = static_cast<float>(src_x - x0);
      out.at(x, y) = (1.0f - fy) * ((1.0f - fx) * map.at(x0, y0) + fx * map.at(x1, y0)) +
                     fy * ((1.0f - fx) * map.at(x0, y1) + fx * map.at(x1, y1));
      out.assigned_mask_mut()(x, y) = 1;
    }
  }
  return out;
}

FeatureMap build_part_feature_map(const std::vector<Box>& boxes, const OracleImage& image,
                                  const EmbeddingOracle& oracle) {
  const int w = image.color.width();
  const int h = image.color.height();
  const int channels = oracle.embedding_dim();
  std::vector<double> sum(static_cast<std::size_t>(w) * h * channels, 0.0);
  std::vector<int> hits(static_cast<std::size_t>(w) * h, 0);

  for (const Box& box : boxes) {
    if (box.w < 2 || box.h < 2) {
      std::ostringstream msg;
      msg << "build_part_feature_map: degenerate box " << box.w << "x" << box.h << " skipped";
      warn(msg.str());
      continue;
    }
    if (box.x < 0 || box.y < 0 || box.x + box.w > w || box.y + box.h > h)
      throw_precondition("build_part_feature_map: box outside image");

    ImageD crop(box.w, box.h, image.color.channels());
    for (int y = 0; y < box.h; ++y)
      for (int x = 0; x < box.w; ++x)
        for (int c = 0; c < crop.channels(); ++c) crop(x, y, c) = image.color(box.x + x, box.y + y, c);
    const ImageD patch = resize_bilinear(crop, kPatchSize, kPatchSize);
    const FeatureMap grid = oracle.patch_features(patch, image, box);
    if (grid.width() != kPatchGrid || grid.height() != kPatchGrid || grid.channels() != channels)
      throw_precondition("build_part_feature_map: oracle patch features must be 28 x 28 x C");
    const FeatureMap pasted = resize_features(grid, box.w, box.h);

    for (int y = 0; y < box.h; ++y) {
      for (int x = 0; x < box.w; ++x) {
        const std::size_t pix = static_cast<std::size_t>(box.y + y) * w + box.x + x;
        const auto f = pasted.at(x, y);
        double* dst = sum.data() + pix * channels;
        for (int c = 0; c < channels; ++c) dst[c] += f[c];
        ++hits[pix];
      }
    }
  }

  FeatureMap out(w, h, channels);
  Eigen::VectorXd v(channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * w + x;
      if (hits[pix] == 0) continue;
      for (int c = 0; c < channels; ++c) v[c] = sum[pix * channels + c] / hits[pix];
      out.set(x, y, v);
    }
  }
  return out;
}

DecodedMaps decode_buffer(const ImageD& latents, const DecoderWeights& weights) {
  if (latents.channels() != kLatentDim) throw_precondition("decode_buffer: latent buffer must have 16 channels");
  weights.validate();
  const int w = latents.width();
  const int h = latents.height();
  DecodedMaps out{FeatureMap(w, h, weights.output_dim()), FeatureMap(w, h, weights.output_dim())};
  Eigen::MatrixXd batch(kLatentDim, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < kLatentDim; ++c) batch(c, x) = latents(x, y, c);
    const DecodedBatch d = decode(batch, weights);
    for (int x = 0; x < w; ++x) {
      out.obj.set(x, y, d.obj.col(x));
      out.part.set(x, y, d.part.col(x));
    }
  }
  return out;
}

Eigen::VectorXd hashed_unit_vector(const std::string& text, std::uint64_t seed, int dim) {
  // FNV-1a keeps the mapping stable across standard library implementations.
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 1099511628211ull;
  }
  std::mt19937_64 rng(hash ^ (seed * 0x9E3779B97F4A7C15ull));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = normal(rng);
  return v.normalized();
}

}  // namespace splatgrasp
