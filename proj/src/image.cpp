#include "warship/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace warship {
namespace {

std::string lower_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --- Netpbm ---------------------------------------------------------------

class PnmTokenizer {
 public:
  PnmTokenizer(const std::string& bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  unsigned long next_uint(const std::string& where) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw FormatError(where + ": truncated header or data");
    if (!std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError(where + ": expected an unsigned integer");
    }
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<unsigned long>(bytes_[pos_] - '0');
      if (v > 1'000'000'000UL) throw FormatError(where + ": value out of range");
      ++pos_;
    }
    return v;
  }
  // After the maxval, binary formats have exactly one whitespace byte before the raster.
  std::size_t raster_start() const { return pos_ + 1; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_;
};

ImageBuffer decode_pnm(const std::string& bytes, const std::string& name) {
  const char kind = bytes[1];
  const std::size_t chans = (kind == '2' || kind == '5') ? 1 : 3;
  const bool ascii = kind == '2' || kind == '3';
  PnmTokenizer tok(bytes, 2);
  const auto width = tok.next_uint(name);
  const auto height = tok.next_uint(name);
  const auto maxval = tok.next_uint(name);
  if (width == 0 || height == 0) throw FormatError(name + ": zero image dimension");
  if (maxval != 255) {
    throw FormatError(name + ": unsupported bit depth (maxval " + std::to_string(maxval) +
                      ", only 8-bit images are supported)");
  }
  ImageBuffer img(height, width, chans);
  const std::size_t count = img.samples.size();
  if (ascii) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto v = tok.next_uint(name);
      if (v > 255) throw FormatError(name + ": sample exceeds maxval");
      img.samples[i] = static_cast<double>(v) / 255.0;
    }
  } else {
    const std::size_t start = tok.raster_start();
    if (bytes.size() < start + count) throw FormatError(name + ": truncated raster");
    for (std::size_t i = 0; i < count; ++i) {
      img.samples[i] = static_cast<double>(static_cast<unsigned char>(bytes[start + i])) / 255.0;
    }
  }
  return img;
}

void encode_pnm(const ImageBuffer& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out << (img.channels == 1 ? "P2" : "P3") << "\n" << img.w << " " << img.h << "\n255\n";
  const std::size_t row_len = img.w * img.channels;
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t i = 0; i < row_len; ++i) {
      if (i) out << ' ';
      out << static_cast<int>(quantize8(img.samples[y * row_len + i]));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

// --- PNG ------------------------------------------------------------------

struct PngReadSource {
  const std::string* bytes;
  std::size_t pos;
};

void png_read_fn(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
  if (src->bytes->size() - src->pos < n) png_error(png, "truncated PNG stream");
  std::memcpy(out, src->bytes->data() + src->pos, n);
  src->pos += n;
}

void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warn_fn(png_structp, png_const_charp) {}

ImageBuffer decode_png(const std::string& bytes, const std::string& name) {
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warn_fn);
  if (!png) throw FormatError(name + ": libpng init failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};

  PngReadSource src{&bytes, 0};
  std::vector<png_bytep> rows;
  std::vector<unsigned char> raster;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;

  if (setjmp(png_jmpbuf(png))) {
    throw FormatError(name + ": " + (err.empty() ? std::string("corrupt PNG") : err));
  }
  png_set_read_fn(png, &src, png_read_fn);
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  if (bit_depth != 8) {
    err = "unsupported bit depth " + std::to_string(bit_depth) + " (only 8-bit PNG is supported)";
    png_error(png, err.c_str());
  }
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const std::size_t chans = png_get_channels(png, info);
  if (chans != 1 && chans != 3) png_error(png, "unsupported PNG channel layout");
  const std::size_t stride = png_get_rowbytes(png, info);
  raster.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = raster.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  ImageBuffer img(height, width, chans);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t i = 0; i < width * chans; ++i) {
      img.samples[y * width * chans + i] = static_cast<double>(raster[y * stride + i]) / 255.0;
    }
  }
  return img;
}

void encode_png(const ImageBuffer& img, const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("cannot write image " + path.string());
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> file(fp, std::fclose);

  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warn_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};

  const std::size_t row_len = img.w * img.channels;
  std::vector<unsigned char> raster(row_len * img.h);
  for (std::size_t i = 0; i < raster.size(); ++i) raster[i] = quantize8(img.samples[i]);
  std::vector<png_bytep> rows(img.h);
  for (std::size_t y = 0; y < img.h; ++y) rows[y] = raster.data() + y * row_len;

  if (setjmp(png_jmpbuf(png))) throw IoError("PNG encode failed for " + path.string() + ": " + err);
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
}

}  // namespace

std::uint8_t quantize8(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::lround(clamped));
}

ImageBuffer load_image(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  const std::string name = path.filename().string();
  static const unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return decode_png(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] >= '2' && bytes[1] <= '6' && bytes[1] != '4') {
    return decode_pnm(bytes, name);
  }
  throw FormatError(name + ": unsupported image format (expected PNG or PGM/PPM)");
}

void save_image(const ImageBuffer& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) throw ConfigError("save_image: 1 or 3 channels required");
  if (img.h == 0 || img.w == 0 || img.samples.size() != img.h * img.w * img.channels) {
    throw ConfigError("save_image: malformed image buffer");
  }
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    encode_png(img, path);
  } else if (ext == ".pgm" || ext == ".ppm") {
    if ((ext == ".pgm") != (img.channels == 1)) {
      throw ConfigError("save_image: " + ext + " does not match a " + std::to_string(img.channels) +
                        "-channel image");
    }
    encode_pnm(img, path);
  } else {
    throw FormatError("unsupported output format '" + ext + "'");
  }
}

YCbCr rgb_to_ycbcr(const ImageBuffer& rgb) {
  if (rgb.channels != 3) throw ConfigError("rgb_to_ycbcr: expected 3 channels");
  YCbCr out{ImageBuffer(rgb.h, rgb.w, 1), ImageBuffer(rgb.h, rgb.w, 1), ImageBuffer(rgb.h, rgb.w, 1)};
  for (std::size_t i = 0; i < rgb.h * rgb.w; ++i) {
    const double r = rgb.samples[3 * i], g = rgb.samples[3 * i + 1], b = rgb.samples[3 * i + 2];
    out.y.samples[i] = std::clamp((16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0, 0.0, 1.0);
    out.cb.samples[i] = std::clamp((128.0 - 37.797 * r - 74.203 * g + 112.0 * b) / 255.0, 0.0, 1.0);
    out.cr.samples[i] = std::clamp((128.0 + 112.0 * r - 93.786 * g - 18.214 * b) / 255.0, 0.0, 1.0);
  }
  return out;
}

ImageBuffer ycbcr_to_rgb(const YCbCr& ycc) {
  const std::size_t h = ycc.y.h, w = ycc.y.w;
  if (ycc.cb.h != h || ycc.cb.w != w || ycc.cr.h != h || ycc.cr.w != w) {
    throw ConfigError("ycbcr_to_rgb: plane size mismatch");
  }
  // Inverse of the forward matrix M (rows Y, Cb, Cr over R, G, B), by cofactors.
  const double m[3][3] = {{65.481, 128.553, 24.966}, {-37.797, -74.203, 112.0}, {112.0, -93.786, -18.214}};
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  double inv[3][3];
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const int r0 = (j + 1) % 3, r1 = (j + 2) % 3, c0 = (i + 1) % 3, c1 = (i + 2) % 3;
      inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
    }
  }
  ImageBuffer rgb(h, w, 3);
  for (std::size_t i = 0; i < h * w; ++i) {
    const double v[3] = {ycc.y.samples[i] * 255.0 - 16.0, ycc.cb.samples[i] * 255.0 - 128.0,
                         ycc.cr.samples[i] * 255.0 - 128.0};
    for (int c = 0; c < 3; ++c) {
      const double val = inv[c][0] * v[0] + inv[c][1] * v[1] + inv[c][2] * v[2];
      rgb.samples[3 * i + c] = std::clamp(val, 0.0, 1.0);
    }
  }
  return rgb;
}

ImageBuffer luminance(const ImageBuffer& img) {
  if (img.channels == 1) return img;
  return rgb_to_ycbcr(img).y;
}

ImageBuffer extract_channel(const ImageBuffer& img, std::size_t c) {
  if (c >= img.channels) throw ConfigError("extract_channel: channel out of range");
  ImageBuffer out(img.h, img.w, 1);
  for (std::size_t i = 0; i < img.h * img.w; ++i) out.samples[i] = img.samples[i * img.channels + c];
  return out;
}

Tensor4<float> to_tensor(const ImageBuffer& gray) {
  if (gray.channels != 1) throw ConfigError("to_tensor: expected a single-channel image");
  Tensor4<float> t(1, 1, gray.h, gray.w);
  for (std::size_t i = 0; i < gray.samples.size(); ++i) t[i] = static_cast<float>(gray.samples[i]);
  return t;
}

ImageBuffer from_tensor(const Tensor4<float>& t, bool clamp) {
  if (t.n() != 1 || t.c() != 1) throw ConfigError("from_tensor: expected a (1,1,h,w) tensor");
  ImageBuffer img(t.h(), t.w(), 1);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = static_cast<double>(t[i]);
    img.samples[i] = clamp ? std::clamp(v, 0.0, 1.0) : v;
  }
  return img;
}

}  // namespace warship
