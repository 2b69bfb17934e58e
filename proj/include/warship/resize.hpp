#pragma once

#include <cstddef>

#include "warship/image.hpp"

namespace warship {

inline constexpr double kKeysA = -0.5;

// Keys cubic convolution kernel with a = -0.5; support [-2, 2].
constexpr double keys_cubic(double x) {
  const double ax = x < 0 ? -x : x;
  if (ax <= 1.0) return ((kKeysA + 2.0) * ax - (kKeysA + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return ((kKeysA * ax - 5.0 * kKeysA) * ax + 8.0 * kKeysA) * ax - 4.0 * kKeysA;
  return 0.0;
}

// Separable Keys bicubic resampling. Source coordinate of output index d is
// (d + 0.5) * (in / out) - 0.5; borders clamp to the edge; taps are renormalized to sum 1.
// With antialias and a downscale, the kernel is stretched by in/out.
ImageBuffer resize_bicubic(const ImageBuffer& img, std::size_t out_h, std::size_t out_w,
                           bool antialias);

// Center crop so both dimensions are multiples of `scale`.
ImageBuffer crop_to_multiple(const ImageBuffer& img, std::size_t scale);

// Antialiased bicubic downscale by 1/scale followed by bicubic upscale back to the input size.
// Dimensions must already be divisible by scale.
ImageBuffer degrade(const ImageBuffer& hr, std::size_t scale);

}  // namespace warship
