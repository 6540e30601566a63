#include "splatgrasp/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "splatgrasp/detail/json_io.hpp"
#include "splatgrasp/io.hpp"

namespace splatgrasp {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

const char* const kBackground = "background";

// Adds a Gaussian vector whose expected norm is `sigma`.
void add_noise(Eigen::VectorXd& v, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0) return;
  std::normal_distribution<double> g(0.0, sigma / std::sqrt(static_cast<double>(v.size())));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) += g(rng);
}

DetectionSet detections_from_ids(const LabelImage& ids, int min_pixels) {
  int max_id = -1;
  for (const auto v : ids.data()) max_id = std::max(max_id, static_cast<int>(v));
  DetectionSet out;
  for (int id = 0; id <= max_id; ++id) {
    Mask m(ids.width(), ids.height(), 1, 0);
    int x0 = ids.width(), y0 = ids.height(), x1 = -1, y1 = -1, count = 0;
    for (int y = 0; y < ids.height(); ++y)
      for (int x = 0; x < ids.width(); ++x)
        if (ids(x, y) == id) {
          m(x, y) = 1;
          ++count;
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    if (count < min_pixels) continue;
    out.boxes.push_back({x0, y0, x1 - x0 + 1, y1 - y0 + 1});
    out.masks.push_back(std::move(m));
  }
  return out;
}

// Cell centres of an n x n grid over `box`, in source pixel coordinates.
Vec2 cell_centre(const Box& box, int i, int j, int n) {
  return {box.x + (j + 0.5) * box.w / n - 0.5, box.y + (i + 0.5) * box.h / n - 0.5};
}

}  // namespace

SyntheticEmbeddingOracle::SyntheticEmbeddingOracle(const SyntheticDataset& dataset, SyntheticOracleConfig config)
    : dataset_(&dataset), config_(config) {
  if (config_.noise_sigma < 0) throw_precondition("synthetic oracle: negative noise");
}

const SyntheticFrame& SyntheticEmbeddingOracle::lookup(const OracleImage& image) const {
  return dataset_->frame(image.camera, image.step);
}

Eigen::VectorXd SyntheticEmbeddingOracle::text_embedding(const std::string& text) const {
  return hashed_unit_vector(text, config_.embedding_seed, kEmbeddingDim);
}

Eigen::VectorXd SyntheticEmbeddingOracle::object_embedding(int object) const {
  if (object < 0) return text_embedding(kBackground);
  return text_embedding(dataset_->spec.objects.at(static_cast<std::size_t>(object)).label);
}

Eigen::VectorXd SyntheticEmbeddingOracle::part_embedding(int part) const {
  if (part < 0) return text_embedding(kBackground);
  return text_embedding(dataset_->parts.at(static_cast<std::size_t>(part)).label);
}

FeatureMap SyntheticEmbeddingOracle::image_features(const OracleImage& image) const {
  const SyntheticFrame& f = lookup(image);
  std::vector<Eigen::VectorXd> table;
  for (int o = -1; o < static_cast<int>(dataset_->spec.objects.size()); ++o) table.push_back(object_embedding(o));
  std::mt19937_64 rng(mix(mix(config_.noise_seed, static_cast<std::uint64_t>(image.camera)),
                          static_cast<std::uint64_t>(image.step)));
  FeatureMap out(f.object_ids.width(), f.object_ids.height(), kEmbeddingDim);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      Eigen::VectorXd v = table[static_cast<std::size_t>(f.object_ids(x, y) + 1)];
      add_noise(v, config_.noise_sigma, rng);
      out.set(x, y, v);
    }
  return out;
}

DetectionSet SyntheticEmbeddingOracle::detections(const OracleImage& image) const {
  return detections_from_ids(lookup(image).object_ids, config_.min_detection_pixels);
}

FeatureMap SyntheticEmbeddingOracle::patch_features(const ImageD&, const OracleImage& source, const Box& box) const {
  const SyntheticFrame& f = lookup(source);
  std::vector<Eigen::VectorXd> table;
  for (int p = -1; p < static_cast<int>(dataset_->parts.size()); ++p) table.push_back(part_embedding(p));
  std::uint64_t s = mix(mix(config_.noise_seed, static_cast<std::uint64_t>(source.camera)),
                        static_cast<std::uint64_t>(source.step));
  for (int v : {box.x, box.y, box.w, box.h}) s = mix(s, static_cast<std::uint64_t>(v));
  std::mt19937_64 rng(s);
  FeatureMap out(kPatchGrid, kPatchGrid, kEmbeddingDim);
  for (int i = 0; i < kPatchGrid; ++i)
    for (int j = 0; j < kPatchGrid; ++j) {
      const Vec2 c = cell_centre(box, i, j, kPatchGrid);
      const int x = std::clamp(static_cast<int>(std::lround(c.x())), 0, f.part_ids.width() - 1);
      const int y = std::clamp(static_cast<int>(std::lround(c.y())), 0, f.part_ids.height() - 1);
      Eigen::VectorXd v = table[static_cast<std::size_t>(f.part_ids(x, y) + 1)];
      add_noise(v, config_.noise_sigma, rng);
      out.set(j, i, v);
    }
  return out;
}

PrecomputedOracle::PrecomputedOracle(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::ifstream in(dir_ / "text.json");
  if (!in) throw_io("precomputed oracle: no text.json in " + dir_.string());
  try {
    const auto j = detail::json::parse(in);
    for (const auto& [text, values] : j.items()) {
      const auto v = values.get<std::vector<double>>();
      text_[text] = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
  } catch (const detail::json::exception& e) {
    throw_io("precomputed oracle: bad text.json: " + std::string(e.what()));
  }
  if (text_.empty()) throw_io("precomputed oracle: text.json is empty");
  dim_ = static_cast<int>(text_.begin()->second.size());
}

FeatureMap PrecomputedOracle::image_features(const OracleImage& image) const {
  return read_feature_map(frame_path(dir_, image.camera, image.step, "fc.fmap"));
}

DetectionSet PrecomputedOracle::detections(const OracleImage& image) const {
  return detections_from_ids(read_label_png(frame_path(dir_, image.camera, image.step, "detections.png")), 1);
}

FeatureMap PrecomputedOracle::patch_features(const ImageD&, const OracleImage& source, const Box& box) const {
  const FeatureMap part = read_feature_map(frame_path(dir_, source.camera, source.step, "part.fmap"));
  FeatureMap out(kPatchGrid, kPatchGrid, part.channels());
  for (int i = 0; i < kPatchGrid; ++i)
    for (int j = 0; j < kPatchGrid; ++j) {
      const Vec2 c = cell_centre(box, i, j, kPatchGrid);
      const int x = std::clamp(static_cast<int>(std::lround(c.x())), 0, part.width() - 1);
      const int y = std::clamp(static_cast<int>(std::lround(c.y())), 0, part.height() - 1);
      if (part.assigned(x, y)) out.set(j, i, part.at(x, y).cast<double>());
    }
  return out;
}

Eigen::VectorXd PrecomputedOracle::text_embedding(const std::string& text) const {
  const auto it = text_.find(text);
  if (it == text_.end()) throw_precondition("precomputed oracle: no embedding for \"" + text + "\"");
  return it->second.normalized();
}

void export_oracle(const std::filesystem::path& dir, const EmbeddingOracle& oracle, const SyntheticDataset& dataset,
                   const std::vector<std::string>& texts) {
  std::filesystem::create_directories(dir);
  detail::json text = detail::json::object();
  for (const auto& t : texts) {
    const Eigen::VectorXd v = oracle.text_embedding(t);
    text[t] = std::vector<double>(v.data(), v.data() + v.size());
  }
  {
    std::ofstream out(dir / "text.json");
    if (!out) throw_io("cannot write " + (dir / "text.json").string());
    out << text.dump() << "\n";
  }
  for (const auto& f : dataset.frames) {
    std::filesystem::create_directories(dir / ("cam" + std::to_string(f.camera)));
    const OracleImage image{f.color, f.camera, f.step};
    write_feature_map(frame_path(dir, f.camera, f.step, "fc.fmap"), oracle.image_features(image));
    const DetectionSet det = oracle.detections(image);
    LabelImage ids(f.color.width(), f.color.height(), 1, -1);
    for (std::size_t k = 0; k < det.masks.size(); ++k)
      for (int y = 0; y < ids.height(); ++y)
        for (int x = 0; x < ids.width(); ++x)
          if (det.masks[k](x, y)) ids(x, y) = static_cast<std::int32_t>(k);
    write_label_png(frame_path(dir, f.camera, f.step, "detections.png"), ids);
    write_feature_map(frame_path(dir, f.camera, f.step, "part.fmap"), build_part_feature_map(det.boxes, image, oracle));
  }
}

}  // namespace splatgrasp
