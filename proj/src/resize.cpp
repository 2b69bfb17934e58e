#include "warship/resize.hpp"

#include <algorithm>
#include <cmath>

namespace warship {
namespace {

struct Taps {
  std::size_t count = 0;             // taps per output sample
  std::vector<std::size_t> index;    // out_size * count, clamped source indices
  std::vector<double> weight;        // out_size * count, normalized
};

Taps build_taps(std::size_t in_size, std::size_t out_size, bool antialias) {
  const double scale = static_cast<double>(out_size) / static_cast<double>(in_size);
  const bool stretch = antialias && scale < 1.0;
  const double kernel_scale = stretch ? scale : 1.0;
  const double width = 4.0 / kernel_scale;

  Taps t;
  t.count = static_cast<std::size_t>(std::ceil(width)) + 2;
  t.index.resize(out_size * t.count);
  t.weight.resize(out_size * t.count);
  for (std::size_t d = 0; d < out_size; ++d) {
    const double u = (static_cast<double>(d) + 0.5) / scale - 0.5;
    const long left = static_cast<long>(std::floor(u - width / 2.0));
    double sum = 0.0;
    for (std::size_t j = 0; j < t.count; ++j) {
      const long src = left + static_cast<long>(j);
      const double wgt = kernel_scale * keys_cubic(kernel_scale * (u - static_cast<double>(src)));
      t.index[d * t.count + j] =
          static_cast<std::size_t>(std::clamp(src, 0L, static_cast<long>(in_size) - 1));
      t.weight[d * t.count + j] = wgt;
      sum += wgt;
    }
    for (std::size_t j = 0; j < t.count; ++j) t.weight[d * t.count + j] /= sum;
  }
  return t;
}

}  // namespace

ImageBuffer resize_bicubic(const ImageBuffer& img, std::size_t out_h, std::size_t out_w,
                           bool antialias) {
  if (out_h == 0 || out_w == 0) throw ConfigError("resize_bicubic: degenerate target size");
  if (img.h == 0 || img.w == 0) throw ConfigError("resize_bicubic: empty source image");
  const std::size_t C = img.channels;

  // Horizontal pass.
  const Taps tx = build_taps(img.w, out_w, antialias);
  ImageBuffer mid(img.h, out_w, C);
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < tx.count; ++j) {
          acc += tx.weight[x * tx.count + j] * img.at(y, tx.index[x * tx.count + j], c);
        }
        mid.at(y, x, c) = acc;
      }
    }
  }

  // Vertical pass.
  const Taps ty = build_taps(img.h, out_h, antialias);
  ImageBuffer out(out_h, out_w, C);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < ty.count; ++j) {
          acc += ty.weight[y * ty.count + j] * mid.at(ty.index[y * ty.count + j], x, c);
        }
        out.at(y, x, c) = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return out;
}

ImageBuffer crop_to_multiple(const ImageBuffer& img, std::size_t scale) {
  if (scale == 0) throw ConfigError("crop_to_multiple: scale must be >= 1");
  const std::size_t h = img.h - img.h % scale;
  const std::size_t w = img.w - img.w % scale;
  if (h == 0 || w == 0) throw ConfigError("crop_to_multiple: image smaller than the scale");
  if (h == img.h && w == img.w) return img;
  const std::size_t oy = (img.h - h) / 2, ox = (img.w - w) / 2;
  ImageBuffer out(h, w, img.channels);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y + oy, x + ox, c);
    }
  }
  return out;
}

ImageBuffer degrade(const ImageBuffer& hr, std::size_t scale) {
  if (scale == 0 || hr.h % scale != 0 || hr.w % scale != 0) {
    throw ConfigError("degrade: image " + std::to_string(hr.h) + "x" + std::to_string(hr.w) +
                      " is not divisible by scale " + std::to_string(scale));
  }
  const ImageBuffer lr = resize_bicubic(hr, hr.h / scale, hr.w / scale, /*antialias=*/true);
  return resize_bicubic(lr, hr.h, hr.w, /*antialias=*/false);
}

}  // namespace warship
