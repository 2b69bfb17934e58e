#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "warship/tensor.hpp"

namespace warship {

// Row-major, channel-interleaved samples in [0, 1]. channels is 1 (gray / Y) or 3 (RGB).
struct ImageBuffer {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t channels = 1;
  std::vector<double> samples;

  ImageBuffer() = default;
  ImageBuffer(std::size_t height, std::size_t width, std::size_t chans, double fill = 0.0)
      : h(height), w(width), channels(chans), samples(height * width * chans, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) { return samples[(y * w + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return samples[(y * w + x) * channels + c];
  }

  bool operator==(const ImageBuffer&) const = default;
};

// PNG (8-bit gray, gray+alpha, RGB, RGBA, palette) or Netpbm P2/P3/P5/P6 with maxval 255.
// Alpha is dropped. Samples are value / 255.
ImageBuffer load_image(const std::filesystem::path& path);

// Format by extension: .png, .pgm (1 channel, plain P2), .ppm (3 channels, plain P3).
// Samples are clamped to [0, 1] and quantized with round-half-away-from-zero.
void save_image(const ImageBuffer& img, const std::filesystem::path& path);

std::uint8_t quantize8(double v);

struct YCbCr {
  ImageBuffer y;
  ImageBuffer cb;
  ImageBuffer cr;
};

// BT.601 studio swing, e.g. Y = (16 + 65.481 R + 128.553 G + 24.966 B) / 255. Clamped to [0, 1].
YCbCr rgb_to_ycbcr(const ImageBuffer& rgb);
ImageBuffer ycbcr_to_rgb(const YCbCr& ycc);

// Luminance of an RGB image; a one-channel image is returned unchanged.
ImageBuffer luminance(const ImageBuffer& img);

ImageBuffer extract_channel(const ImageBuffer& img, std::size_t c);

// Single-channel image <-> (1, 1, h, w) tensor.
Tensor4<float> to_tensor(const ImageBuffer& gray);
ImageBuffer from_tensor(const Tensor4<float>& t, bool clamp = true);

}  // namespace warship
