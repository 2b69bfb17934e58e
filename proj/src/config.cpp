#include "warship/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace warship {
namespace {

using json = nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename V>
void read(const json& obj, const char* key, V& into, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace

void RunConfig::resolve() {
  train.seed = seed;
  model.validate();
  train.validate();
  loss.validate();
  if (threads < 1) throw ConfigError("config: threads must be >= 1");
  if (patch_size < 1 || stride < 1) throw ConfigError("config: patch_size and stride must be >= 1");
}

DatasetOptions RunConfig::dataset_options() const {
  return DatasetOptions{model.scale, patch_size, stride, augment, seed};
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  reject_unknown(doc, {"seed", "threads", "model", "train", "loss", "data", "paths"}, "");

  RunConfig cfg;
  read(doc, "seed", cfg.seed, "");
  read(doc, "threads", cfg.threads, "");

  if (doc.contains("model")) {
    const json& m = doc["model"];
    reject_unknown(m, {"recurrences", "f_embed", "f_infer", "kernel_size", "scale"}, "model");
    read(m, "recurrences", cfg.model.recurrences, "model");
    read(m, "f_embed", cfg.model.f_embed, "model");
    cfg.model.f_infer = cfg.model.f_embed / 2;
    read(m, "f_infer", cfg.model.f_infer, "model");
    read(m, "kernel_size", cfg.model.kernel_size, "model");
    read(m, "scale", cfg.model.scale, "model");
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    reject_unknown(t, {"batch_size", "lr_initial", "lr_decay_factor", "patience_epochs",
                       "lr_stop_threshold", "momentum", "clip_tau", "val_fraction", "max_epochs",
                       "max_steps", "checkpoint_every"},
                   "train");
    read(t, "batch_size", cfg.train.batch_size, "train");
    read(t, "lr_initial", cfg.train.lr_initial, "train");
    read(t, "lr_decay_factor", cfg.train.lr_decay_factor, "train");
    read(t, "patience_epochs", cfg.train.patience_epochs, "train");
    read(t, "lr_stop_threshold", cfg.train.lr_stop_threshold, "train");
    read(t, "momentum", cfg.train.momentum, "train");
    read(t, "clip_tau", cfg.train.clip_tau, "train");
    read(t, "val_fraction", cfg.train.val_fraction, "train");
    read(t, "max_epochs", cfg.train.max_epochs, "train");
    read(t, "max_steps", cfg.train.max_steps, "train");
    read(t, "checkpoint_every", cfg.checkpoint_every, "train");
  }
  if (doc.contains("loss")) {
    const json& l = doc["loss"];
    reject_unknown(l, {"alpha", "beta", "alpha_schedule", "alpha_decay_epochs"}, "loss");
    read(l, "alpha", cfg.loss.alpha, "loss");
    read(l, "beta", cfg.loss.beta, "loss");
    read(l, "alpha_decay_epochs", cfg.loss.alpha_decay_epochs, "loss");
    std::string schedule = "constant";
    read(l, "alpha_schedule", schedule, "loss");
    if (schedule == "constant") {
      cfg.loss.alpha_schedule = AlphaSchedule::Constant;
    } else if (schedule == "linear_decay") {
      cfg.loss.alpha_schedule = AlphaSchedule::LinearDecay;
    } else {
      throw ConfigError("config: loss.alpha_schedule must be 'constant' or 'linear_decay'");
    }
  }
  if (doc.contains("data")) {
    const json& d = doc["data"];
    reject_unknown(d, {"augment", "patch_size", "stride"}, "data");
    read(d, "augment", cfg.augment, "data");
    read(d, "patch_size", cfg.patch_size, "data");
    read(d, "stride", cfg.stride, "data");
  }
  if (doc.contains("paths")) {
    const json& p = doc["paths"];
    reject_unknown(p, {"images", "dataset", "out"}, "paths");
    read(p, "images", cfg.paths.images, "paths");
    read(p, "dataset", cfg.paths.dataset, "paths");
    read(p, "out", cfg.paths.out, "paths");
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["model"] = {{"recurrences", c.model.recurrences},
                {"f_embed", c.model.f_embed},
                {"f_infer", c.model.f_infer},
                {"kernel_size", c.model.kernel_size},
                {"scale", c.model.scale}};
  j["train"] = {{"batch_size", c.train.batch_size},
                {"lr_initial", c.train.lr_initial},
                {"lr_decay_factor", c.train.lr_decay_factor},
                {"patience_epochs", c.train.patience_epochs},
                {"lr_stop_threshold", c.train.lr_stop_threshold},
                {"momentum", c.train.momentum},
                {"clip_tau", c.train.clip_tau},
                {"val_fraction", c.train.val_fraction},
                {"max_epochs", c.train.max_epochs},
                {"max_steps", c.train.max_steps},
                {"checkpoint_every", c.checkpoint_every}};
  j["loss"] = {{"alpha", c.loss.alpha},
               {"beta", c.loss.beta},
               {"alpha_schedule",
                c.loss.alpha_schedule == AlphaSchedule::Constant ? "constant" : "linear_decay"},
               {"alpha_decay_epochs", c.loss.alpha_decay_epochs}};
  j["data"] = {{"augment", c.augment}, {"patch_size", c.patch_size}, {"stride", c.stride}};
  j["paths"] = {{"images", c.paths.images}, {"dataset", c.paths.dataset}, {"out", c.paths.out}};
  return j.dump(2) + "\n";
}

}  // namespace warship
