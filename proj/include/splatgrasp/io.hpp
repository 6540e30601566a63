#pragma once

#include <filesystem>
#include <string>

#include "splatgrasp/feature_field.hpp"
#include "splatgrasp/image.hpp"
#include "splatgrasp/scene.hpp"
#include "splatgrasp/synthetic.hpp"

namespace splatgrasp {

namespace fs = std::filesystem;

/// 8-bit PNG of a 1- or 3-channel image with values in [0, 1] (clamped).
void write_png(const fs::path& path, const ImageD& image);
/// Grey or RGB PNG (alpha dropped, 16-bit reduced) as [0, 1] values.
ImageD read_png(const fs::path& path);

/// 16-bit grey PNG storing id + 1, so background (-1) is 0. Ids must lie in [-1, 65534].
void write_label_png(const fs::path& path, const LabelImage& labels);
LabelImage read_label_png(const fs::path& path);

/// Little-endian PFM, 1 or 3 channels, rows stored bottom-up as the format requires.
void write_pfm(const fs::path& path, const ImageD& image);
ImageD read_pfm(const fs::path& path);

/// `.gsplat`: one JSON header line, then little-endian float32 arrays, attribute-major:
/// centres (N x 3), quaternions (N x 4, w x y z), scales (N x 3), opacity (N),
/// colour (N x 3), latents (N x 16); then the decoder (trunk_w hidden x 16, trunk_b,
/// obj_w C x hidden, obj_b, part_w, part_b; matrices row-major); then, when the header
/// says so, int32 object and part labels (N x 2).
void write_scene(const fs::path& path, const Scene& scene);
Scene read_scene(const fs::path& path);

/// `.fmap`: one JSON header line, float32 channel planes (C x H x W), then the validity
/// bitmap packed eight pixels per byte, row-major, least significant bit first.
void write_feature_map(const fs::path& path, const FeatureMap& map);
FeatureMap read_feature_map(const fs::path& path);

/// Dataset directory: meta.json plus cam<k>/step<t>.{color.png, depth.pfm, objid.png,
/// partid.png}. The exact depth is written as depth_true.pfm when it differs.
void write_dataset(const fs::path& dir, const SyntheticDataset& dataset);
SyntheticDataset read_dataset(const fs::path& dir);

fs::path frame_path(const fs::path& dir, int camera, int step, const std::string& suffix);

}  // namespace splatgrasp
