#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "splatgrasp/common.hpp"

namespace splatgrasp {

/// Dense interleaved (row-major, channel-last) image.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (width < 0 || height < 0 || channels <= 0) throw_precondition("image: invalid shape");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  T& operator()(int x, int y, int c = 0) { return data_[offset(x, y) + c]; }
  const T& operator()(int x, int y, int c = 0) const { return data_[offset(x, y) + c]; }

  T* pixel(int x, int y) { return data_.data() + offset(x, y); }
  const T* pixel(int x, int y) const { return data_.data() + offset(x, y); }

  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  template <typename U>
  bool same_size(const Image<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const Image& other) const = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using ImageD = Image<double>;
using Mask = Image<std::uint8_t>;
using LabelImage = Image<std::int32_t>;

/// Bilinear sample of channel `c` at continuous pixel coordinates (pixel centres at integers).
/// Returns false when any of the four taps is outside the image or not finite/positive
/// (when `require_positive`).
bool sample_bilinear(const ImageD& image, double x, double y, int c, double& out,
                     bool require_positive = false);

/// Resize with bilinear interpolation using pixel-centre alignment.
ImageD resize_bilinear(const ImageD& image, int width, int height);

/// Square-structuring-element morphology (Chebyshev radius).
Mask dilate(const Mask& mask, int radius);
Mask erode(const Mask& mask, int radius);

std::size_t count_nonzero(const Mask& mask);

}  // namespace splatgrasp
