#include "splatgrasp/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "splatgrasp/detail/json_io.hpp"

namespace splatgrasp {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

using detail::json;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const fs::path& path, const char* mode) {
  File f(std::fopen(path.string().c_str(), mode));
  if (!f) throw_io("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp message) { throw_io(std::string("png: ") + message); }
void png_quiet(png_structp, png_const_charp) {}

void write_png_rows(const fs::path& path, int width, int height, int color_type, int depth,
                    const std::vector<std::uint8_t>& bytes) {
  File f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_quiet);
  if (!png) throw_io("png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t stride = static_cast<std::size_t>(width) * channels * (depth / 8);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(y) * stride));
  png_write_end(png, nullptr);
}

// Rows of 8- or 16-bit samples (16-bit big-endian as stored), grey or RGB.
struct PngData {
  int width = 0;
  int height = 0;
  int channels = 0;
  int depth = 0;
  std::vector<std::uint8_t> bytes;
};

PngData read_png_rows(const fs::path& path, bool keep_16bit) {
  File f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8)) throw_io("not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_quiet);
  if (!png) throw_io("png: cannot allocate reader");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (!keep_16bit) png_set_strip_16(png);
  png_read_update_info(png, info);
  PngData out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.bytes.resize(stride * static_cast<std::size_t>(out.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = out.bytes.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return out;
}

template <typename T>
void write_raw(std::ostream& out, const T* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
}

template <typename T>
void read_raw(std::istream& in, T* data, std::size_t count, const fs::path& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
  if (!in) throw_io("truncated file: " + path.string());
}

json read_header_line(std::istream& in, const fs::path& path, const std::string& format) {
  std::string line;
  if (!std::getline(in, line)) throw_io("empty file: " + path.string());
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw_io("bad header in " + path.string() + ": " + e.what());
  }
  if (header.value("format", "") != format) throw_io(path.string() + " is not a ." + format + " file");
  if (header.value("version", 0) != 1) throw_io(path.string() + ": unsupported version");
  return header;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  std::vector<float> buf;
  buf.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) buf.push_back(static_cast<float>(m(r, c)));
  write_raw(out, buf.data(), buf.size());
}

void read_matrix(std::istream& in, Eigen::MatrixXd& m, const fs::path& path) {
  std::vector<float> buf(static_cast<std::size_t>(m.size()));
  read_raw(in, buf.data(), buf.size(), path);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = buf[k++];
}

void read_vector(std::istream& in, Eigen::VectorXd& v, const fs::path& path) {
  std::vector<float> buf(static_cast<std::size_t>(v.size()));
  read_raw(in, buf.data(), buf.size(), path);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = buf[static_cast<std::size_t>(i)];
}

}  // namespace

void write_png(const fs::path& path, const ImageD& image) {
  if (image.channels() != 1 && image.channels() != 3) throw_precondition("write_png: need 1 or 3 channels");
  if (image.empty()) throw_precondition("write_png: empty image");
  std::vector<std::uint8_t> bytes(image.data().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = image.data()[i];
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0) * 255.0));
  }
  write_png_rows(path, image.width(), image.height(), image.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8,
                 bytes);
}

ImageD read_png(const fs::path& path) {
  const PngData d = read_png_rows(path, false);
  ImageD out(d.width, d.height, d.channels);
  for (std::size_t i = 0; i < d.bytes.size(); ++i) out.data()[i] = d.bytes[i] / 255.0;
  return out;
}

void write_label_png(const fs::path& path, const LabelImage& labels) {
  if (labels.channels() != 1 || labels.empty()) throw_precondition("write_label_png: need a non-empty 1-channel image");
  std::vector<std::uint8_t> bytes(labels.data().size() * 2);
  for (std::size_t i = 0; i < labels.data().size(); ++i) {
    const std::int32_t id = labels.data()[i];
    if (id < -1 || id > 65534) throw_precondition("write_label_png: id out of range");
    const auto v = static_cast<std::uint16_t>(id + 1);
    bytes[2 * i] = static_cast<std::uint8_t>(v >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(v & 0xFF);
  }
  write_png_rows(path, labels.width(), labels.height(), PNG_COLOR_TYPE_GRAY, 16, bytes);
}

LabelImage read_label_png(const fs::path& path) {
  const PngData d = read_png_rows(path, true);
  if (d.channels != 1) throw_io("label PNG must be grey: " + path.string());
  LabelImage out(d.width, d.height, 1);
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    const int v = d.depth == 16 ? (d.bytes[2 * i] << 8 | d.bytes[2 * i + 1]) : d.bytes[i];
    out.data()[i] = v - 1;
  }
  return out;
}

void write_pfm(const fs::path& path, const ImageD& image) {
  if (image.channels() != 1 && image.channels() != 3) throw_precondition("write_pfm: need 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_io("cannot open " + path.string());
  out << (image.channels() == 3 ? "PF" : "Pf") << "\n" << image.width() << " " << image.height() << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(image.width()) * image.channels());
  for (int y = image.height() - 1; y >= 0; --y) {
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c)
        row[static_cast<std::size_t>(x) * image.channels() + c] = static_cast<float>(image(x, y, c));
    write_raw(out, row.data(), row.size());
  }
  if (!out) throw_io("write failed: " + path.string());
}

ImageD read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  std::string magic;
  int width = 0;
  int height = 0;
  double scale = 0;
  in >> magic >> width >> height >> scale;
  in.get();
  if (!in || (magic != "PF" && magic != "Pf") || width <= 0 || height <= 0) throw_io("bad PFM header: " + path.string());
  if (scale > 0) throw_io("big-endian PFM not supported: " + path.string());
  const int channels = magic == "PF" ? 3 : 1;
  ImageD out(width, height, channels);
  std::vector<float> row(static_cast<std::size_t>(width) * channels);
  for (int y = height - 1; y >= 0; --y) {
    read_raw(in, row.data(), row.size(), path);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) out(x, y, c) = row[static_cast<std::size_t>(x) * channels + c];
  }
  return out;
}

void write_scene(const fs::path& path, const Scene& scene) {
  scene.decoder.validate();
  const bool labels = scene.has_labels();
  const json header = {{"format", "gsplat"},
                       {"version", 1},
                       {"count", scene.size()},
                       {"decoder",
                        {{"hidden", scene.decoder.hidden_dim()},
                         {"output_dim", scene.decoder.output_dim()},
                         {"activation", scene.decoder.activation == Activation::Tanh ? "tanh" : "identity"}}},
                       {"labels", labels},
                       {"columns", {"center:3", "quat_wxyz:4", "scale:3", "opacity:1", "color:3", "latent:16"}}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_io("cannot open " + path.string());
  out << header.dump() << "\n";
  const std::size_t n = scene.size();
  auto column = [&](int width, auto&& get) {
    std::vector<float> buf;
    buf.reserve(n * static_cast<std::size_t>(width));
    for (const auto& p : scene.primitives)
      for (int k = 0; k < width; ++k) buf.push_back(static_cast<float>(get(p, k)));
    write_raw(out, buf.data(), buf.size());
  };
  column(3, [](const GaussianPrimitive& p, int k) { return p.center(k); });
  column(4, [](const GaussianPrimitive& p, int k) { return p.rotation(k); });
  column(3, [](const GaussianPrimitive& p, int k) { return p.scale(k); });
  column(1, [](const GaussianPrimitive& p, int) { return p.opacity; });
  column(3, [](const GaussianPrimitive& p, int k) { return p.color(k); });
  column(kLatentDim, [](const GaussianPrimitive& p, int k) { return p.feature_latent(k); });
  const DecoderWeights& d = scene.decoder;
  write_matrix(out, d.trunk_w);
  write_matrix(out, d.trunk_b);
  write_matrix(out, d.obj_w);
  write_matrix(out, d.obj_b);
  write_matrix(out, d.part_w);
  write_matrix(out, d.part_b);
  if (labels) {
    std::vector<std::int32_t> buf;
    for (const auto& l : scene.labels) {
      buf.push_back(l.object);
      buf.push_back(l.part);
    }
    write_raw(out, buf.data(), buf.size());
  }
  if (!out) throw_io("write failed: " + path.string());
}

Scene read_scene(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  const json header = read_header_line(in, path, "gsplat");
  Scene scene;
  std::size_t n = 0;
  int hidden = 0;
  int output = 0;
  std::string activation;
  bool labels = false;
  try {
    n = header.at("count").get<std::size_t>();
    hidden = header.at("decoder").at("hidden").get<int>();
    output = header.at("decoder").at("output_dim").get<int>();
    activation = header.at("decoder").at("activation").get<std::string>();
    labels = header.value("labels", false);
  } catch (const json::exception& e) {
    throw_io("bad header in " + path.string() + ": " + e.what());
  }
  if (hidden <= 0 || output <= 0) throw_io("bad decoder shape in " + path.string());
  scene.primitives.resize(n);
  auto column = [&](int width, auto&& set) {
    std::vector<float> buf(n * static_cast<std::size_t>(width));
    read_raw(in, buf.data(), buf.size(), path);
    for (std::size_t i = 0; i < n; ++i)
      for (int k = 0; k < width; ++k) set(scene.primitives[i], k, buf[i * static_cast<std::size_t>(width) + k]);
  };
  column(3, [](GaussianPrimitive& p, int k, double v) { p.center(k) = v; });
  column(4, [](GaussianPrimitive& p, int k, double v) { p.rotation(k) = v; });
  column(3, [](GaussianPrimitive& p, int k, double v) { p.scale(k) = v; });
  column(1, [](GaussianPrimitive& p, int, double v) { p.opacity = v; });
  column(3, [](GaussianPrimitive& p, int k, double v) { p.color(k) = v; });
  column(kLatentDim, [](GaussianPrimitive& p, int k, double v) { p.feature_latent(k) = v; });
  for (auto& p : scene.primitives) p.rotation = normalized_quat(p.rotation);
  DecoderWeights d = DecoderWeights::zeros(output, hidden);
  d.activation = activation == "identity" ? Activation::Identity : Activation::Tanh;
  read_matrix(in, d.trunk_w, path);
  read_vector(in, d.trunk_b, path);
  read_matrix(in, d.obj_w, path);
  read_vector(in, d.obj_b, path);
  read_matrix(in, d.part_w, path);
  read_vector(in, d.part_b, path);
  scene.decoder = std::move(d);
  if (labels) {
    std::vector<std::int32_t> buf(2 * n);
    read_raw(in, buf.data(), buf.size(), path);
    scene.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) scene.labels[i] = {buf[2 * i], buf[2 * i + 1]};
  }
  try {
    scene.validate();
  } catch (const Error& e) {
    throw_io(path.string() + ": " + e.what());
  }
  return scene;
}

void write_feature_map(const fs::path& path, const FeatureMap& map) {
  const json header = {{"format", "fmap"},
                       {"version", 1},
                       {"width", map.width()},
                       {"height", map.height()},
                       {"channels", map.channels()},
                       {"layout", "planar-float32+bitmap"}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_io("cannot open " + path.string());
  out << header.dump() << "\n";
  const std::size_t pixels = static_cast<std::size_t>(map.width()) * map.height();
  std::vector<float> plane(pixels);
  for (int c = 0; c < map.channels(); ++c) {
    for (std::size_t i = 0; i < pixels; ++i) plane[i] = map.data()[i * map.channels() + c];
    write_raw(out, plane.data(), plane.size());
  }
  std::vector<std::uint8_t> bits((pixels + 7) / 8, 0);
  for (std::size_t i = 0; i < pixels; ++i)
    if (map.assigned_mask().data()[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  write_raw(out, bits.data(), bits.size());
  if (!out) throw_io("write failed: " + path.string());
}

FeatureMap read_feature_map(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  const json header = read_header_line(in, path, "fmap");
  const int w = header.value("width", -1);
  const int h = header.value("height", -1);
  const int c = header.value("channels", -1);
  if (w < 0 || h < 0 || c <= 0) throw_io("bad feature map shape in " + path.string());
  FeatureMap map(w, h, c);
  const std::size_t pixels = static_cast<std::size_t>(w) * h;
  std::vector<float> plane(pixels);
  for (int k = 0; k < c; ++k) {
    read_raw(in, plane.data(), plane.size(), path);
    for (std::size_t i = 0; i < pixels; ++i) map.data()[i * c + k] = plane[i];
  }
  std::vector<std::uint8_t> bits((pixels + 7) / 8);
  read_raw(in, bits.data(), bits.size(), path);
  for (std::size_t i = 0; i < pixels; ++i)
    map.assigned_mask_mut().data()[i] = (bits[i / 8] >> (i % 8)) & 1u;
  return map;
}

fs::path frame_path(const fs::path& dir, int camera, int step, const std::string& suffix) {
  return dir / ("cam" + std::to_string(camera)) / ("step" + std::to_string(step) + "." + suffix);
}

void write_dataset(const fs::path& dir, const SyntheticDataset& ds) {
  fs::create_directories(dir);
  const auto& spec = ds.spec;
  json meta;
  meta["format"] = "splatgrasp-dataset";
  meta["version"] = 1;
  meta["seed"] = spec.seed;
  meta["steps"] = ds.options.steps;
  meta["motion"] = to_string(ds.options.motion);
  meta["moving_object"] = ds.options.moving_object;
  meta["noise"] = {{"depth_sigma", spec.noise.depth_sigma},
                   {"pixel_sigma", spec.noise.pixel_sigma},
                   {"outlier_fraction", spec.noise.outlier_fraction}};
  meta["cameras"] = json::array();
  for (const auto& c : spec.cameras) meta["cameras"].push_back(detail::camera_json(c));
  meta["objects"] = json::array();
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const auto& o = spec.objects[i];
    json traj = json::array();
    for (const auto& m : ds.motion[i]) traj.push_back(detail::transform_json(m));
    meta["objects"].push_back({{"shape", to_string(o.shape)},
                               {"label", o.label},
                               {"dimensions", detail::vec_json(o.dimensions)},
                               {"color", detail::vec_json(o.color)},
                               {"pose", detail::transform_json(o.pose)},
                               {"part_labels", o.part_labels},
                               {"motion", traj}});
  }
  meta["parts"] = json::array();
  for (const auto& p : ds.parts) meta["parts"].push_back({{"object", p.object}, {"local", p.local}, {"label", p.label}});
  {
    std::ofstream out(dir / "meta.json");
    if (!out) throw_io("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << "\n";
  }
  for (int c = 0; c < ds.camera_count(); ++c) fs::create_directories(dir / ("cam" + std::to_string(c)));
  for (const auto& f : ds.frames) {
    write_png(frame_path(dir, f.camera, f.step, "color.png"), f.color);
    write_pfm(frame_path(dir, f.camera, f.step, "depth.pfm"), f.depth);
    if (spec.noise.depth_sigma > 0) write_pfm(frame_path(dir, f.camera, f.step, "depth_true.pfm"), f.true_depth);
    write_label_png(frame_path(dir, f.camera, f.step, "objid.png"), f.object_ids);
    write_label_png(frame_path(dir, f.camera, f.step, "partid.png"), f.part_ids);
  }
}

SyntheticDataset read_dataset(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw_io("no meta.json in " + dir.string());
  SyntheticDataset ds;
  try {
    const json meta = json::parse(in);
    if (meta.value("format", "") != "splatgrasp-dataset") throw_io(dir.string() + ": not a dataset directory");
    auto& spec = ds.spec;
    spec.seed = meta.at("seed").get<std::uint64_t>();
    spec.noise.depth_sigma = meta.at("noise").at("depth_sigma").get<double>();
    spec.noise.pixel_sigma = meta.at("noise").at("pixel_sigma").get<double>();
    spec.noise.outlier_fraction = meta.at("noise").at("outlier_fraction").get<double>();
    for (const auto& c : meta.at("cameras")) spec.cameras.push_back(detail::camera_from_json(c));
    for (const auto& o : meta.at("objects")) {
      ObjectSpec obj;
      obj.shape = parse_shape(o.at("shape").get<std::string>());
      obj.label = o.at("label").get<std::string>();
      obj.dimensions = detail::vec_from_json(o.at("dimensions"));
      obj.color = detail::vec_from_json(o.at("color"));
      obj.pose = detail::transform_from_json(o.at("pose"));
      obj.part_labels = o.at("part_labels").get<std::vector<std::string>>();
      std::vector<RigidTransform> traj;
      for (const auto& m : o.at("motion")) traj.push_back(detail::transform_from_json(m));
      spec.objects.push_back(std::move(obj));
      ds.motion.push_back(std::move(traj));
    }
    ds.options.steps = meta.at("steps").get<int>();
    ds.options.motion = parse_motion(meta.at("motion").get<std::string>());
    ds.options.moving_object = meta.at("moving_object").get<int>();
  } catch (const json::exception& e) {
    throw_io("bad meta.json in " + dir.string() + ": " + e.what());
  }
  ds.spec.validate();
  ds.parts = enumerate_parts(ds.spec);
  for (const auto& m : ds.motion)
    if (static_cast<int>(m.size()) != ds.step_count()) throw_io("meta.json: motion length does not match steps");
  for (int s = 0; s < ds.step_count(); ++s) {
    for (int c = 0; c < ds.camera_count(); ++c) {
      SyntheticFrame f;
      f.camera = c;
      f.step = s;
      f.color = read_png(frame_path(dir, c, s, "color.png"));
      f.depth = read_pfm(frame_path(dir, c, s, "depth.pfm"));
      const fs::path exact = frame_path(dir, c, s, "depth_true.pfm");
      f.true_depth = fs::exists(exact) ? read_pfm(exact) : f.depth;
      f.object_ids = read_label_png(frame_path(dir, c, s, "objid.png"));
      f.part_ids = read_label_png(frame_path(dir, c, s, "partid.png"));
      const Camera& cam = ds.spec.cameras[static_cast<std::size_t>(c)];
      if (f.color.width() != cam.width || f.color.height() != cam.height || !f.depth.same_size(f.color) ||
          !f.object_ids.same_size(f.color) || !f.part_ids.same_size(f.color))
        throw_io("frame size mismatch at camera " + std::to_string(c) + " step " + std::to_string(s));
      ds.frames.push_back(std::move(f));
    }
  }
  return ds;
}

}  // namespace splatgrasp
