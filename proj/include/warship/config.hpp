#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "warship/loss.hpp"
#include "warship/model.hpp"
#include "warship/patches.hpp"
#include "warship/trainer.hpp"

namespace warship {

struct PathConfig {
  std::string images;
  std::string dataset;
  std::string out;
};

// Everything one CLI invocation needs. See docs/config.md for the JSON schema.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
  bool augment = true;
  std::size_t patch_size = kPatchSize;
  std::size_t stride = kPatchStride;
  std::size_t checkpoint_every = 1;  // epochs between last.wxzn writes; 0 disables
  PathConfig paths;

  // Copies the master seed into the sub-configs and validates all of them.
  void resolve();
  DatasetOptions dataset_options() const;
};

// Parses a config document. Unknown keys and ill-typed values throw ConfigError; missing keys
// keep their defaults. If model.f_embed is given without model.f_infer, f_infer = f_embed / 2.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Fully-resolved document with every key present.
std::string to_json(const RunConfig& cfg);

}  // namespace warship
