#include "warship/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"

#include "warship/patches.hpp"
#include "warship/resize.hpp"

namespace warship {

double psnr(const ImageBuffer& reference, const ImageBuffer& candidate, std::size_t shave) {
  if (reference.h != candidate.h || reference.w != candidate.w ||
      reference.channels != candidate.channels) {
    throw ConfigError("psnr: image dimensions differ");
  }
  if (reference.channels != 1) throw ConfigError("psnr: expected single-channel (Y) images");
  if (2 * shave >= reference.h || 2 * shave >= reference.w) {
    throw ConfigError("psnr: shave of " + std::to_string(shave) + " leaves no pixels in a " +
                      std::to_string(reference.h) + "x" + std::to_string(reference.w) + " image");
  }
  double sq = 0.0;
  for (std::size_t y = shave; y < reference.h - shave; ++y) {
    for (std::size_t x = shave; x < reference.w - shave; ++x) {
      const double d = reference.at(y, x) - candidate.at(y, x);
      sq += d * d;
    }
  }
  const double count = static_cast<double>((reference.h - 2 * shave) * (reference.w - 2 * shave));
  const double mse = sq / count;
  if (mse == 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

Upscaler bicubic_upscaler() {
  return [](const ImageBuffer& degraded) { return degraded; };
}

Upscaler model_upscaler(const Model<float>& model) {
  return [model](const ImageBuffer& degraded) {
    return from_tensor(infer(model, to_tensor(degraded)), /*clamp=*/true);
  };
}

EvalResult evaluate_set(const Upscaler& upscaler, const std::string& method,
                        const std::filesystem::path& dir, std::size_t scale, std::size_t shave) {
  const auto files = list_images(dir);
  if (files.empty()) throw IoError("no images (.png/.pgm/.ppm) found in " + dir.string());
  EvalResult r;
  r.method = method;
  r.scale = scale;
  r.shave = shave;
  for (const auto& f : files) {
    ImageBuffer hr;
    try {
      hr = crop_to_multiple(luminance(load_image(f)), scale);
    } catch (const std::exception& e) {
      r.skipped.push_back(f.filename().string() + ": " + e.what());
      continue;
    }
    const ImageBuffer input = degrade(hr, scale);
    const ImageBuffer sr = upscaler(input);
    r.images.push_back({f.stem().string(), psnr(hr, sr, shave)});
  }
  if (r.images.empty()) throw IoError("no readable images in " + dir.string());
  double sum = 0.0;
  for (const auto& s : r.images) sum += s.psnr_db;
  r.mean_psnr_db = sum / static_cast<double>(r.images.size());
  return r;
}

std::string render_table(const std::vector<EvalResult>& results) {
  if (results.empty()) throw ConfigError("render_table: no results");
  const std::string row_label = "PSNR";
  std::vector<std::string> values;
  std::size_t label_width = std::max<std::size_t>(row_label.size(), 6);
  std::vector<std::size_t> widths;
  for (const auto& r : results) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", r.mean_psnr_db);
    values.emplace_back(buf);
    widths.push_back(std::max(r.method.size(), values.back().size()));
  }
  auto pad_left = [](const std::string& s, std::size_t w) { return std::string(w - s.size(), ' ') + s; };
  auto pad_right = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); };

  std::string header = pad_right("", label_width);
  std::string row = pad_right(row_label, label_width);
  for (std::size_t i = 0; i < results.size(); ++i) {
    header += "  " + pad_left(results[i].method, widths[i]);
    row += "  " + pad_left(values[i], widths[i]);
  }
  char caption[96];
  std::snprintf(caption, sizeof caption, "PSNR (dB), Y channel, x%zu, shave %zu", results.front().scale,
                results.front().shave);
  return std::string(caption) + "\n" + header + "\n" + row + "\n";
}

std::string to_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["scale"] = r.scale;
  j["shave"] = r.shave;
  j["zero_mse_cap_db"] = kPsnrCapDb;
  j["mean_psnr_db"] = r.mean_psnr_db;
  nlohmann::ordered_json images = nlohmann::ordered_json::array();
  for (const auto& s : r.images) images.push_back({{"name", s.name}, {"psnr_db", s.psnr_db}});
  j["images"] = images;
  j["skipped"] = r.skipped;
  return j.dump(2) + "\n";
}

EvalResult eval_result_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvalResult r;
    r.method = j.at("method").get<std::string>();
    r.scale = j.at("scale").get<std::size_t>();
    r.shave = j.at("shave").get<std::size_t>();
    r.mean_psnr_db = j.at("mean_psnr_db").get<double>();
    for (const auto& s : j.at("images")) {
      r.images.push_back({s.at("name").get<std::string>(), s.at("psnr_db").get<double>()});
    }
    r.skipped = j.value("skipped", std::vector<std::string>{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("evaluation JSON: ") + e.what());
  }
}

}  // namespace warship
