#pragma once

#include <cstdint>

#include "splatgrasp/optimizer.hpp"

namespace splatgrasp::testing {

Camera make_camera(int width, int height, double focal);

/// Primitives in front of `camera` with random orientation, scale, opacity in
/// [min_opacity, max_opacity], colour and latent.
Scene random_scene(const Camera& camera, int count, std::uint64_t seed, double min_opacity = 0.1,
                   double max_opacity = 0.8);

/// Glorot weights plus small random biases, so that no decoded output is exactly zero
/// (cosine losses are not differentiable there).
DecoderWeights random_decoder(int output_dim, std::uint64_t seed);

/// A frame whose targets are random perturbations of what `scene` renders, with random
/// feature targets on a subset of pixels.
Frame random_frame(const Scene& scene, const Camera& camera, std::uint64_t seed, int embedding_dim);

}  // namespace splatgrasp::testing
