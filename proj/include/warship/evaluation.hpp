#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "warship/image.hpp"
#include "warship/model.hpp"

namespace warship {

// Value reported for identical images.
inline constexpr double kPsnrCapDb = 100.0;

// 10 log10(1 / MSE) on [0, 1] samples after removing `shave` pixels from every border.
double psnr(const ImageBuffer& reference, const ImageBuffer& candidate, std::size_t shave);

struct ImageScore {
  std::string name;
  double psnr_db = 0;
};

struct EvalResult {
  std::string method;
  std::size_t scale = 2;
  std::size_t shave = 2;
  std::vector<ImageScore> images;
  std::vector<std::string> skipped;  // "<file>: <reason>"
  double mean_psnr_db = 0;
};

// Maps a degraded (bicubic-upscaled) luminance image to a super-resolved one.
using Upscaler = std::function<ImageBuffer(const ImageBuffer&)>;

// Passthrough of the bicubic input.
Upscaler bicubic_upscaler();
Upscaler model_upscaler(const Model<float>& model);

// For every image in `dir` by sorted name: luminance, crop to the scale, degrade, upscale,
// PSNR against the cropped luminance. Unreadable images are skipped and listed.
EvalResult evaluate_set(const Upscaler& upscaler, const std::string& method,
                        const std::filesystem::path& dir, std::size_t scale, std::size_t shave);

// Table with one column per method and a single PSNR row, two decimals.
std::string render_table(const std::vector<EvalResult>& results);

std::string to_json(const EvalResult& r);
EvalResult eval_result_from_json(const std::string& text);

}  // namespace warship
