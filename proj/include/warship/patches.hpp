#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "warship/image.hpp"

namespace warship {

inline constexpr std::size_t kPatchSize = 41;
inline constexpr std::size_t kPatchStride = 21;

struct PatchRecord {
  std::string source;  // image id (file stem)
  std::size_t row = 0;
  std::size_t col = 0;
  std::string aug;     // augmentation tag, e.g. "r090f_s0.8"

  bool operator==(const PatchRecord&) const = default;
};

// Aligned (degraded input, ground truth) luminance patch pairs, stored as float planes.
struct PatchDataset {
  std::size_t patch_size = kPatchSize;
  std::size_t scale = 0;  // degradation factor; 0 when unknown
  std::vector<PatchRecord> manifest;
  std::vector<float> inputs;
  std::vector<float> targets;

  std::size_t size() const { return manifest.size(); }
  std::size_t plane() const { return patch_size * patch_size; }
  std::span<const float> input(std::size_t i) const {
    return std::span<const float>(inputs).subspan(i * plane(), plane());
  }
  std::span<const float> target(std::size_t i) const {
    return std::span<const float>(targets).subspan(i * plane(), plane());
  }
  void append(const PatchDataset& other);
};

struct PatchExtraction {
  PatchDataset patches;
  std::vector<std::string> warnings;
};

// Origins 0, stride, 2*stride, ... per axis while origin + size <= dim.
std::vector<std::size_t> patch_origins(std::size_t dim, std::size_t size = kPatchSize,
                                       std::size_t stride = kPatchStride);

// Patches of two aligned single-channel images. Records carry `source`/`aug` verbatim.
PatchExtraction extract_patches(const ImageBuffer& input_img, const ImageBuffer& target_img,
                                const std::string& source = "", const std::string& aug = "",
                                std::size_t size = kPatchSize, std::size_t stride = kPatchStride);

struct AugmentedImage {
  std::string tag;
  ImageBuffer image;
};

inline constexpr double kAugmentScales[] = {1.0, 0.9, 0.8, 0.7, 0.6};

ImageBuffer rotate90(const ImageBuffer& img);  // counter-clockwise
ImageBuffer flip_horizontal(const ImageBuffer& img);

// 8 dihedral variants (rotation 0/90/180/270, with and without a horizontal flip) at each of
// the scales in kAugmentScales, the original first. Tags "r<deg>[f]_s<scale>".
std::vector<AugmentedImage> augment(const ImageBuffer& img);

struct DatasetOptions {
  std::size_t scale = 2;
  std::size_t patch_size = kPatchSize;
  std::size_t stride = kPatchStride;
  bool augment = true;
  std::uint64_t split_seed = 1;
};

struct SourceImage {
  std::string id;
  std::string file;
  std::string sha256;
};

struct PreparedDataset {
  DatasetOptions options;
  std::vector<SourceImage> sources;
  PatchDataset patches;
  std::vector<std::string> warnings;
};

// Every image in `dir` (sorted by file name): luminance, augmentation, crop to the scale,
// degrade, patches. Records are ordered by (source, row, col, aug).
PreparedDataset prepare_dataset(const std::filesystem::path& dir, const DatasetOptions& opts);

// Writes manifest.json and patches.bin into `out_dir`.
void write_dataset(const PreparedDataset& ds, const std::filesystem::path& out_dir);

// Reads manifest.json and patches.bin, verifying the patch store checksum.
PatchDataset load_dataset(const std::filesystem::path& dir);

// Re-derives a dataset from a manifest and the original images, verifying each source checksum.
PreparedDataset rebuild_dataset(const std::filesystem::path& manifest_path,
                                const std::filesystem::path& images_dir);

std::string manifest_json(const PreparedDataset& ds);
std::string patch_store_bytes(const PatchDataset& patches);

std::string sha256_hex(std::span<const char> bytes);
std::string sha256_file(const std::filesystem::path& path);

// Supported image extensions, lower-case, in sorted directory order.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace warship
