#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "warship/errors.hpp"
#include "warship/model.hpp"

namespace warship {

// Little-endian binary layout:
//   "WXZN" | u32 version | u32 recurrences, f_embed, f_infer, kernel_size, scale
//   then 13 records in parameter order, each: u32 name_len | name | u32 shape[4] | f32 data[]
//   Every entry contributes a weight record "<name>" followed by a bias record
//   "<name>.bias" of shape (out, 1, 1, 1); rnet.merge has no bias record.
inline constexpr char kCheckpointMagic[4] = {'W', 'X', 'Z', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public FormatError {
 public:
  enum class Kind { BadMagic, VersionMismatch, Truncated, ShapeMismatch, Io };

  CheckpointError(Kind kind, const std::string& what) : FormatError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const Model<float>& model);
Model<float> deserialize_checkpoint(const std::string& bytes);

}  // namespace warship
