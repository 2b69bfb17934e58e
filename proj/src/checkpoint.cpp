#include "warship/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace warship {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void bytes(std::string_view s) { out_.append(s); }
  void f32(std::span<const float> v) { raw(v.data(), v.size_bytes()); }
  std::string take() { return std::move(out_); }

 private:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void raw(void* p, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::Truncated,
                            std::string("checkpoint truncated while reading ") + what);
    }
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v = 0;
    raw(&v, sizeof v, what);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    raw(s.data(), n, what);
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void write_record(Writer& w, std::string_view name, const Shape4& shape, std::span<const float> data) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(shape.n));
  w.u32(static_cast<std::uint32_t>(shape.c));
  w.u32(static_cast<std::uint32_t>(shape.h));
  w.u32(static_cast<std::uint32_t>(shape.w));
  w.f32(data);
}

void read_record(Reader& r, const std::string& expected_name, const Shape4& expected_shape,
                 std::span<float> out) {
  const std::uint32_t len = r.u32("record name length");
  if (len > 256) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                          "checkpoint record name too long for '" + expected_name + "'");
  }
  const std::string name = r.str(len, "record name");
  if (name != expected_name) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                          "checkpoint record '" + name + "' where '" + expected_name + "' expected");
  }
  Shape4 shape;
  shape.n = r.u32("shape");
  shape.c = r.u32("shape");
  shape.h = r.u32("shape");
  shape.w = r.u32("shape");
  if (!(shape == expected_shape)) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                          "checkpoint record '" + name + "' has shape " + to_string(shape) +
                              ", config implies " + to_string(expected_shape));
  }
  r.raw(out.data(), out.size_bytes(), "record data");
}

}  // namespace

std::string serialize_checkpoint(const Model<float>& model) {
  model.config.validate();
  Writer w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  const ModelConfig& c = model.config;
  for (std::size_t v : {c.recurrences, c.f_embed, c.f_infer, c.kernel_size, c.scale}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  for (const auto& e : model.params) {
    const auto& p = e.params;
    write_record(w, e.name, p.weights.shape(), p.weights.span());
    if (p.has_bias()) {
      write_record(w, std::string(e.name) + ".bias", Shape4{p.bias.size(), 1, 1, 1}, p.bias);
    }
  }
  return w.take();
}

Model<float> deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[4] = {};
  if (bytes.size() < 4) {
    throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint shorter than its magic");
  }
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Kind::BadMagic, "not a checkpoint: bad magic bytes");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                          "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  ModelConfig cfg;
  cfg.recurrences = r.u32("config");
  cfg.f_embed = r.u32("config");
  cfg.f_infer = r.u32("config");
  cfg.kernel_size = r.u32("config");
  cfg.scale = r.u32("config");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                          std::string("checkpoint carries invalid config: ") + e.what());
  }

  // The zero-seed build only provides the shapes; every value is overwritten below.
  Model<float> model = build_model<float>(cfg, 0);
  for (auto& e : model.params) {
    auto& p = e.params;
    read_record(r, std::string(e.name), p.weights.shape(), p.weights.span());
    if (p.has_bias()) {
      read_record(r, std::string(e.name) + ".bias", Shape4{p.bias.size(), 1, 1, 1}, p.bias);
    }
  }
  if (!r.at_end()) {
    throw CheckpointError(CheckpointError::Kind::ShapeMismatch,
                          "checkpoint has trailing bytes after the last record");
  }
  return model;
}

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw CheckpointError(CheckpointError::Kind::Io, "cannot write checkpoint " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::Io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace warship
