#include "warship/patches.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "warship/resize.hpp"

namespace warship {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kStoreMagic[4] = {'W', 'X', 'Z', 'P'};
constexpr std::uint32_t kStoreVersion = 1;
constexpr const char* kManifestFormat = "warship-sr-patches";
constexpr int kManifestVersion = 1;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::string scale_tag(double s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%.1f", s);
  return buf;
}

std::string geometry_tag(int degrees, bool flip) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "r%03d%s", degrees, flip ? "f" : "");
  return buf;
}

PreparedDataset prepare_from_files(const std::vector<std::filesystem::path>& files,
                                   const DatasetOptions& opts) {
  if (opts.scale < 1) throw ConfigError("dataset: scale must be >= 1");
  if (opts.patch_size < 1 || opts.stride < 1) throw ConfigError("dataset: bad patch geometry");

  PreparedDataset ds;
  ds.options = opts;
  ds.patches.patch_size = opts.patch_size;
  ds.patches.scale = opts.scale;
  for (const auto& file : files) {
    SourceImage src{file.stem().string(), file.filename().string(), sha256_file(file)};
    const ImageBuffer y = luminance(load_image(file));

    std::vector<AugmentedImage> variants;
    if (opts.augment) {
      variants = augment(y);
    } else {
      variants.push_back({geometry_tag(0, false) + "_" + scale_tag(1.0), y});
    }
    for (const auto& v : variants) {
      if (v.image.h < opts.scale || v.image.w < opts.scale) {
        ds.warnings.push_back(src.id + "/" + v.tag + ": smaller than the scale factor");
        continue;
      }
      const ImageBuffer target = crop_to_multiple(v.image, opts.scale);
      const ImageBuffer input = degrade(target, opts.scale);
      PatchExtraction ex = extract_patches(input, target, src.id, v.tag, opts.patch_size, opts.stride);
      for (auto& w : ex.warnings) ds.warnings.push_back(src.id + "/" + v.tag + ": " + w);
      ds.patches.append(ex.patches);
    }
    ds.sources.push_back(std::move(src));
  }

  // Order-stable manifest: (source, row, col, aug).
  const PatchDataset& raw = ds.patches;
  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&raw](std::size_t a, std::size_t b) {
    const auto& ra = raw.manifest[a];
    const auto& rb = raw.manifest[b];
    return std::tie(ra.source, ra.row, ra.col, ra.aug) < std::tie(rb.source, rb.row, rb.col, rb.aug);
  });
  PatchDataset sorted;
  sorted.patch_size = raw.patch_size;
  sorted.scale = raw.scale;
  const std::size_t plane = raw.plane();
  sorted.manifest.reserve(raw.size());
  sorted.inputs.reserve(raw.inputs.size());
  sorted.targets.reserve(raw.targets.size());
  for (std::size_t i : order) {
    sorted.manifest.push_back(raw.manifest[i]);
    sorted.inputs.insert(sorted.inputs.end(), raw.inputs.begin() + i * plane,
                         raw.inputs.begin() + (i + 1) * plane);
    sorted.targets.insert(sorted.targets.end(), raw.targets.begin() + i * plane,
                          raw.targets.begin() + (i + 1) * plane);
  }
  ds.patches = std::move(sorted);
  return ds;
}

template <typename V>
void put_u32(std::string& out, V v) {
  const auto x = static_cast<std::uint32_t>(v);
  out.append(reinterpret_cast<const char*>(&x), sizeof x);
}

}  // namespace

void PatchDataset::append(const PatchDataset& other) {
  if (other.size() == 0) return;
  if (other.patch_size != patch_size) throw ConfigError("PatchDataset::append: patch size mismatch");
  manifest.insert(manifest.end(), other.manifest.begin(), other.manifest.end());
  inputs.insert(inputs.end(), other.inputs.begin(), other.inputs.end());
  targets.insert(targets.end(), other.targets.begin(), other.targets.end());
}

std::vector<std::size_t> patch_origins(std::size_t dim, std::size_t size, std::size_t stride) {
  std::vector<std::size_t> out;
  for (std::size_t o = 0; o + size <= dim; o += stride) out.push_back(o);
  return out;
}

PatchExtraction extract_patches(const ImageBuffer& input_img, const ImageBuffer& target_img,
                                const std::string& source, const std::string& aug,
                                std::size_t size, std::size_t stride) {
  if (input_img.channels != 1 || target_img.channels != 1) {
    throw ConfigError("extract_patches: images must be single-channel");
  }
  if (input_img.h != target_img.h || input_img.w != target_img.w) {
    throw ConfigError("extract_patches: input and target sizes differ");
  }
  PatchExtraction ex;
  ex.patches.patch_size = size;
  if (input_img.h < size || input_img.w < size) {
    ex.warnings.push_back("image " + std::to_string(input_img.h) + "x" + std::to_string(input_img.w) +
                          " is smaller than the " + std::to_string(size) + "x" +
                          std::to_string(size) + " patch; no patches extracted");
    return ex;
  }
  for (std::size_t r : patch_origins(input_img.h, size, stride)) {
    for (std::size_t c : patch_origins(input_img.w, size, stride)) {
      ex.patches.manifest.push_back({source, r, c, aug});
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          ex.patches.inputs.push_back(static_cast<float>(input_img.at(r + y, c + x)));
          ex.patches.targets.push_back(static_cast<float>(target_img.at(r + y, c + x)));
        }
      }
    }
  }
  return ex;
}

ImageBuffer rotate90(const ImageBuffer& img) {
  ImageBuffer out(img.w, img.h, img.channels);
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.at(img.w - 1 - x, y, c) = img.at(y, x, c);
    }
  }
  return out;
}

ImageBuffer flip_horizontal(const ImageBuffer& img) {
  ImageBuffer out(img.h, img.w, img.channels);
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      for (std::size_t c = 0; c < img.channels; ++c) out.at(y, img.w - 1 - x, c) = img.at(y, x, c);
    }
  }
  return out;
}

std::vector<AugmentedImage> augment(const ImageBuffer& img) {
  std::vector<AugmentedImage> out;
  for (const double s : kAugmentScales) {
    ImageBuffer base = img;
    if (s != 1.0) {
      const auto h = std::max<long>(1, std::lround(static_cast<double>(img.h) * s));
      const auto w = std::max<long>(1, std::lround(static_cast<double>(img.w) * s));
      base = resize_bicubic(img, static_cast<std::size_t>(h), static_cast<std::size_t>(w), true);
    }
    ImageBuffer rotated = base;
    for (int deg = 0; deg < 360; deg += 90) {
      out.push_back({geometry_tag(deg, false) + "_" + scale_tag(s), rotated});
      out.push_back({geometry_tag(deg, true) + "_" + scale_tag(s), flip_horizontal(rotated)});
      rotated = rotate90(rotated);
    }
  }
  return out;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (ext == ".png" || ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  return files;
}

PreparedDataset prepare_dataset(const std::filesystem::path& dir, const DatasetOptions& opts) {
  const auto files = list_images(dir);
  if (files.empty()) throw IoError("no images (.png/.pgm/.ppm) found in " + dir.string());
  return prepare_from_files(files, opts);
}

std::string patch_store_bytes(const PatchDataset& patches) {
  static_assert(std::endian::native == std::endian::little, "patch store assumes little-endian");
  std::string out(kStoreMagic, 4);
  put_u32(out, kStoreVersion);
  put_u32(out, patches.size());
  put_u32(out, patches.patch_size);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto in = patches.input(i);
    const auto tg = patches.target(i);
    out.append(reinterpret_cast<const char*>(in.data()), in.size_bytes());
    out.append(reinterpret_cast<const char*>(tg.data()), tg.size_bytes());
  }
  return out;
}

std::string manifest_json(const PreparedDataset& ds) {
  const std::string store = patch_store_bytes(ds.patches);
  ordered_json j;
  j["format"] = kManifestFormat;
  j["version"] = kManifestVersion;
  j["scale"] = ds.options.scale;
  j["patch_size"] = ds.options.patch_size;
  j["stride"] = ds.options.stride;
  j["augment"] = ds.options.augment;
  j["split_seed"] = ds.options.split_seed;
  ordered_json tags = ordered_json::array();
  if (ds.options.augment) {
    for (const double s : kAugmentScales) {
      for (int deg = 0; deg < 360; deg += 90) {
        tags.push_back(geometry_tag(deg, false) + "_" + scale_tag(s));
        tags.push_back(geometry_tag(deg, true) + "_" + scale_tag(s));
      }
    }
  } else {
    tags.push_back(geometry_tag(0, false) + "_" + scale_tag(1.0));
  }
  j["augmentations"] = tags;
  ordered_json sources = ordered_json::array();
  for (const auto& s : ds.sources) {
    sources.push_back({{"id", s.id}, {"file", s.file}, {"sha256", s.sha256}});
  }
  j["sources"] = sources;
  j["patch_count"] = ds.patches.size();
  ordered_json patches = ordered_json::array();
  for (const auto& r : ds.patches.manifest) {
    patches.push_back({{"source", r.source}, {"row", r.row}, {"col", r.col}, {"aug", r.aug}});
  }
  j["patches"] = patches;
  j["patch_store"] = {{"file", "patches.bin"}, {"sha256", sha256_hex(store)}};
  return j.dump(2) + "\n";
}

void write_dataset(const PreparedDataset& ds, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_file(out_dir / "patches.bin", patch_store_bytes(ds.patches));
  write_file(out_dir / "manifest.json", manifest_json(ds));
}

PatchDataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) {
    throw IoError("no dataset manifest at " + manifest_path.string());
  }
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  if (j.value("format", "") != kManifestFormat || j.value("version", 0) != kManifestVersion) {
    throw FormatError("manifest.json: not a version-1 patch manifest");
  }
  const std::string store = read_file(dir / j["patch_store"]["file"].get<std::string>());
  if (sha256_hex(store) != j["patch_store"]["sha256"].get<std::string>()) {
    throw FormatError("patch store checksum does not match the manifest");
  }
  if (store.size() < 16 || std::memcmp(store.data(), kStoreMagic, 4) != 0) {
    throw FormatError("patch store: bad magic");
  }
  std::uint32_t header[3];
  std::memcpy(header, store.data() + 4, sizeof header);
  if (header[0] != kStoreVersion) throw FormatError("patch store: unsupported version");
  PatchDataset ds;
  ds.patch_size = header[2];
  ds.scale = j.at("scale").get<std::size_t>();
  const std::size_t count = header[1];
  const std::size_t plane_bytes = ds.plane() * sizeof(float);
  if (store.size() != 16 + count * 2 * plane_bytes) throw FormatError("patch store: truncated");
  if (count != j["patch_count"].get<std::size_t>() || count != j["patches"].size()) {
    throw FormatError("patch store count disagrees with the manifest");
  }
  ds.inputs.resize(count * ds.plane());
  ds.targets.resize(count * ds.plane());
  const char* p = store.data() + 16;
  for (std::size_t i = 0; i < count; ++i) {
    std::memcpy(ds.inputs.data() + i * ds.plane(), p, plane_bytes);
    p += plane_bytes;
    std::memcpy(ds.targets.data() + i * ds.plane(), p, plane_bytes);
    p += plane_bytes;
  }
  for (const auto& r : j["patches"]) {
    ds.manifest.push_back({r["source"].get<std::string>(), r["row"].get<std::size_t>(),
                           r["col"].get<std::size_t>(), r["aug"].get<std::string>()});
  }
  return ds;
}

PreparedDataset rebuild_dataset(const std::filesystem::path& manifest_path,
                                const std::filesystem::path& images_dir) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest: " + std::string(e.what()));
  }
  DatasetOptions opts;
  opts.scale = j.at("scale").get<std::size_t>();
  opts.patch_size = j.at("patch_size").get<std::size_t>();
  opts.stride = j.at("stride").get<std::size_t>();
  opts.augment = j.at("augment").get<bool>();
  opts.split_seed = j.at("split_seed").get<std::uint64_t>();
  std::vector<std::filesystem::path> files;
  for (const auto& s : j.at("sources")) {
    const auto path = images_dir / s.at("file").get<std::string>();
    if (sha256_file(path) != s.at("sha256").get<std::string>()) {
      throw FormatError("source image " + path.string() + " does not match its manifest checksum");
    }
    files.push_back(path);
  }
  return prepare_from_files(files, opts);
}

std::string sha256_hex(std::span<const char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 computation failed");
  }
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return sha256_hex(bytes);
}

}  // namespace warship
