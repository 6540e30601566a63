#include "splatgrasp/image.hpp"

#include <algorithm>
#include <cmath>

namespace splatgrasp {

bool sample_bilinear(const ImageD& image, double x, double y, int c, double& out,
                     bool require_positive) {
  if (!std::isfinite(x) || !std::isfinite(y)) return false;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  double taps[4];
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int k = 0; k < 4; ++k) {
    // Taps with zero weight may fall outside the image on the last row/column.
    const double weight = (k % 2 ? fx : 1.0 - fx) * (k / 2 ? fy : 1.0 - fy);
    if (!image.contains(xs[k], ys[k])) {
      if (weight == 0.0) {
        taps[k] = 0.0;
        continue;
      }
      return false;
    }
    taps[k] = image(xs[k], ys[k], c);
    if (!std::isfinite(taps[k])) return false;
    if (require_positive && !(taps[k] > 0.0)) return false;
  }
  out = (1.0 - fy) * ((1.0 - fx) * taps[0] + fx * taps[1]) + fy * ((1.0 - fx) * taps[2] + fx * taps[3]);
  return true;
}

ImageD resize_bilinear(const ImageD& image, int width, int height) {
  if (width <= 0 || height <= 0 || image.empty()) throw_precondition("resize_bilinear: empty target or source");
  ImageD out(width, height, image.channels());
  const double sx = static_cast<double>(image.width()) / width;
  const double sy = static_cast<double>(image.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(src_y));
    const int y1 = std::min(y0 + 1, image.height() - 1);
    const double fy = src_y - y0;
    for (int x = 0; x < width; ++x) {
      const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(src_x));
      const int x1 = std::min(x0 + 1, image.width() - 1);
      const double fx = src_x - x0;
      for (int c = 0; c < image.channels(); ++c) {
        out(x, y, c) = (1.0 - fy) * ((1.0 - fx) * image(x0, y0, c) + fx * image(x1, y0, c)) +
                       fy * ((1.0 - fx) * image(x0, y1, c) + fx * image(x1, y1, c));
      }
    }
  }
  return out;
}

namespace {
Mask morph(const Mask& mask, int radius, bool grow) {
  if (radius <= 0) return mask;
  Mask out(mask.width(), mask.height(), 1, 0);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      bool hit = !grow;
      for (int dy = -radius; dy <= radius && hit != grow; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          const int yy = y + dy;
          const bool on = mask.contains(xx, yy) && mask(xx, yy) != 0;
          if (grow && on) {
            hit = true;
            break;
          }
          if (!grow && !on) {
            hit = false;
            break;
          }
        }
      }
      out(x, y) = hit ? 1 : 0;
    }
  }
  return out;
}
}  // namespace

Mask dilate(const Mask& mask, int radius) { return morph(mask, radius, true); }
Mask erode(const Mask& mask, int radius) { return morph(mask, radius, false); }

std::size_t count_nonzero(const Mask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.data().begin(), mask.data().end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

}  // namespace splatgrasp
