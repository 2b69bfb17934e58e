#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "support/oracles.hpp"
#include "warship/checkpoint.hpp"

using namespace warship;
namespace fs = std::filesystem;

namespace {

Model<float> trained_like(const ModelConfig& cfg, std::uint64_t seed) {
  Model<float> m = build_model<float>(cfg, seed);
  Rng rng(seed + 1);
  oracle::jitter(m, rng, 0.5);  // non-zero biases, non-identity recursion
  return m;
}

ModelConfig tiny() {
  ModelConfig c;
  c.recurrences = 3;
  c.f_embed = 8;
  c.f_infer = 4;
  return c;
}

CheckpointError::Kind load_error(const std::string& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  FAIL("checkpoint was accepted");
  return CheckpointError::Kind::Io;
}

void put_u32(std::string& s, std::size_t offset, std::uint32_t v) { std::memcpy(s.data() + offset, &v, 4); }

}  // namespace

TEST_CASE("checkpoint: save/load is bit-exact") {
  const fs::path dir = fs::temp_directory_path() / "warship_ckpt_test";
  fs::create_directories(dir);
  const auto m = trained_like(tiny(), 3);
  save_checkpoint(m, dir / "m.wxzn");
  const auto back = load_checkpoint(dir / "m.wxzn");
  CHECK(back == m);
  CHECK(back.config == m.config);
  for (std::size_t e = 0; e < kParamCount; ++e) {
    const auto& a = m.params.entries[e].params.weights;
    const auto& b = back.params.entries[e].params.weights;
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
  }
  CHECK(serialize_checkpoint(back) == serialize_checkpoint(m));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint: default configuration round trip") {
  const auto m = build_model<float>(ModelConfig{}, 1);
  const auto bytes = serialize_checkpoint(m);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.config == ModelConfig{});
  CHECK(back.params[ParamId::InetRecursive].weights.shape() == Shape4{96, 96, 3, 3});
  CHECK(back == m);
}

TEST_CASE("checkpoint: header layout") {
  const auto bytes = serialize_checkpoint(build_model<float>(tiny(), 2));
  CHECK(bytes.substr(0, 4) == "WXZN");
  std::uint32_t fields[6];
  std::memcpy(fields, bytes.data() + 4, sizeof fields);
  CHECK(fields[0] == kCheckpointVersion);
  CHECK(fields[1] == 3);
  CHECK(fields[2] == 8);
  CHECK(fields[3] == 4);
  CHECK(fields[4] == 3);
  CHECK(fields[5] == 2);
  std::uint32_t name_len = 0;
  std::memcpy(&name_len, bytes.data() + 28, 4);
  CHECK(bytes.substr(32, name_len) == "enet.conv1");
  // 13 records: 7 weights, 6 biases (merge has none).
  std::size_t floats = 0;
  for (const auto& e : build_model<float>(tiny(), 2).params) floats += e.params.weights.size() + e.params.bias.size();
  std::size_t names = 0;
  for (auto n : kParamNames) names += n.size() + (n == "rnet.merge" ? 0 : n.size() + 5);
  CHECK(bytes.size() == 28 + 13 * (4 + 16) + names + 4 * floats);
}

TEST_CASE("checkpoint: corrupt inputs raise distinct errors") {
  const std::string good = serialize_checkpoint(trained_like(tiny(), 4));

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(load_error(bad_magic) == CheckpointError::Kind::BadMagic);

  std::string bad_version = good;
  put_u32(bad_version, 4, kCheckpointVersion + 1);
  CHECK(load_error(bad_version) == CheckpointError::Kind::VersionMismatch);

  CHECK(load_error(good.substr(0, good.size() - 3)) == CheckpointError::Kind::Truncated);
  CHECK(load_error(good.substr(0, 2)) == CheckpointError::Kind::Truncated);

  std::string other_shape = good;
  put_u32(other_shape, 8, 4);  // header claims R = 4, records hold R = 3
  CHECK(load_error(other_shape) == CheckpointError::Kind::ShapeMismatch);

  CHECK(load_error(good + "x") == CheckpointError::Kind::ShapeMismatch);

  try {
    load_checkpoint("/nonexistent/dir/m.wxzn");
    FAIL("missing file was accepted");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::Io);
  }
}
