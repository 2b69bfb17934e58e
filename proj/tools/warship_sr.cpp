#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "warship/checkpoint.hpp"
#include "warship/config.hpp"
#include "warship/evaluation.hpp"
#include "warship/image.hpp"
#include "warship/patches.hpp"
#include "warship/resize.hpp"
#include "warship/rng.hpp"
#include "warship/trainer.hpp"

namespace fs = std::filesystem;
using namespace warship;

namespace {

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kFormat = 5,
  kNumeric = 6,
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed;
};

std::size_t resolve_threads(const Globals& g, std::size_t from_config) {
  if (g.threads) return *g.threads;
  if (const char* env = std::getenv("WARSHIP_SR_THREADS"); env && *env) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("WARSHIP_SR_THREADS must be a positive integer, got '") + env + "'");
  }
  return from_config;
}

RunConfig make_config(const std::string& path, const Globals& g) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  if (g.seed) cfg.seed = *g.seed;
  cfg.threads = resolve_threads(g, cfg.threads);
  return cfg;
}

void apply_threads(std::size_t threads) { omp_set_num_threads(static_cast<int>(threads)); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
  write_text(dir / "config.resolved.json", to_json(cfg));
}

// ---- prepare ----

struct PrepareArgs {
  std::string images, out, config;
  std::optional<std::size_t> scale;
  bool no_augment = false;
};

int run_prepare(const PrepareArgs& a, const Globals& g) {
  RunConfig cfg = make_config(a.config, g);
  if (!a.images.empty()) cfg.paths.images = a.images;
  if (!a.out.empty()) cfg.paths.dataset = a.out;
  if (a.scale) cfg.model.scale = *a.scale;
  if (a.no_augment) cfg.augment = false;
  cfg.resolve();
  if (cfg.paths.images.empty()) throw UsageError("prepare needs --images (or paths.images)");
  if (cfg.paths.dataset.empty()) throw UsageError("prepare needs --out (or paths.dataset)");
  apply_threads(cfg.threads);

  const PreparedDataset ds = prepare_dataset(cfg.paths.images, cfg.dataset_options());
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
  ensure_dir(cfg.paths.dataset);
  write_dataset(ds, cfg.paths.dataset);
  echo_config(cfg, cfg.paths.dataset);
  std::cout << "images: " << ds.sources.size() << "\n";
  std::cout << "patches: " << ds.patches.size() << "\n";
  return kOk;
}

// ---- train ----

struct TrainArgs {
  std::string dataset, out, config;
  std::optional<std::size_t> max_epochs, max_steps;
};

int run_train(const TrainArgs& a, const Globals& g) {
  RunConfig cfg = make_config(a.config, g);
  if (!a.dataset.empty()) cfg.paths.dataset = a.dataset;
  if (!a.out.empty()) cfg.paths.out = a.out;
  if (a.max_epochs) cfg.train.max_epochs = *a.max_epochs;
  if (a.max_steps) cfg.train.max_steps = *a.max_steps;
  cfg.resolve();
  if (cfg.paths.dataset.empty()) throw UsageError("train needs --dataset (or paths.dataset)");
  if (cfg.paths.out.empty()) throw UsageError("train needs --out (or paths.out)");
  apply_threads(cfg.threads);

  if (!fs::exists(fs::path(cfg.paths.dataset) / "manifest.json")) {
    throw IoError("no prepared dataset at " + cfg.paths.dataset + " (manifest.json missing)");
  }
  const PatchDataset data = load_dataset(cfg.paths.dataset);
  if (data.scale != cfg.model.scale) {
    throw ConfigError("dataset was prepared for x" + std::to_string(data.scale) +
                      " but model.scale is " + std::to_string(cfg.model.scale));
  }
  const fs::path out = cfg.paths.out;
  ensure_dir(out);
  echo_config(cfg, out);

  Model<float> model = build_model<float>(cfg.model, derive_seed(cfg.seed, seed_stream::kInit));
  std::ofstream log(out / "train_log.txt", std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write " + (out / "train_log.txt").string());

  TrainHooks hooks;
  hooks.on_best = [&](const Model<float>& m, const EpochRecord&) { save_checkpoint(m, out / "best.wxzn"); };
  hooks.on_epoch = [&](const EpochRecord& r) {
    const std::string line = format_log_line(r);
    log << line << "\n";
    log.flush();
    std::cout << line << "\n" << std::flush;
    if (cfg.checkpoint_every != 0 && r.epoch % cfg.checkpoint_every == 0) {
      save_checkpoint(model, out / "last.wxzn");
    }
  };

  const TrainResult res = train(model, data, cfg.train, cfg.loss, hooks);
  save_checkpoint(model, out / "final.wxzn");
  std::cout << "stopped: " << res.stop_reason << " after " << res.history.records.size()
            << " epochs, " << res.steps << " steps; best val " << res.best_val << "\n";
  return kOk;
}

// ---- sr ----

struct SrArgs {
  std::string model, input, out;
  std::optional<std::size_t> scale;
};

int run_sr(const SrArgs& a, const Globals& g) {
  apply_threads(resolve_threads(g, 1));
  if (!fs::exists(a.model)) throw IoError("checkpoint not found: " + a.model);
  const Model<float> model = load_checkpoint(a.model);
  const std::size_t scale = a.scale.value_or(model.config.scale);
  if (scale != model.config.scale) {
    throw ConfigError("checkpoint is trained for x" + std::to_string(model.config.scale) +
                      ", requested x" + std::to_string(scale));
  }
  const ImageBuffer img = load_image(a.input);
  const std::size_t H = img.h * scale, W = img.w * scale;
  auto super_resolve = [&](const ImageBuffer& y) {
    const ImageBuffer up = resize_bicubic(y, H, W, /*antialias=*/false);
    return from_tensor(infer(model, to_tensor(up)), /*clamp=*/true);
  };

  ImageBuffer result;
  if (img.channels == 1) {
    result = super_resolve(img);
  } else {
    const YCbCr ycc = rgb_to_ycbcr(img);
    YCbCr up{super_resolve(ycc.y), resize_bicubic(ycc.cb, H, W, false), resize_bicubic(ycc.cr, H, W, false)};
    result = ycbcr_to_rgb(up);
  }
  save_image(result, a.out);
  std::cout << a.out << ": " << result.w << "x" << result.h << "\n";
  return kOk;
}

// ---- eval / table ----

struct EvalArgs {
  std::string model, baseline, set, json, method;
  std::size_t scale = 2;
  std::optional<std::size_t> shave;
};

int run_eval(const EvalArgs& a, const Globals& g) {
  apply_threads(resolve_threads(g, 1));
  if (a.model.empty() == a.baseline.empty()) {
    throw UsageError("give exactly one of --model FILE or --baseline bicubic");
  }
  if (!a.baseline.empty() && a.baseline != "bicubic") {
    throw UsageError("unknown baseline '" + a.baseline + "'");
  }
  if (!fs::is_directory(a.set)) throw IoError("evaluation set not found: " + a.set);
  const std::size_t shave = a.shave.value_or(a.scale);

  EvalResult r;
  if (!a.baseline.empty()) {
    r = evaluate_set(bicubic_upscaler(), a.method.empty() ? "Bicubic" : a.method, a.set, a.scale, shave);
  } else {
    if (!fs::exists(a.model)) throw IoError("checkpoint not found: " + a.model);
    const Model<float> model = load_checkpoint(a.model);
    if (model.config.scale != a.scale) {
      throw ConfigError("checkpoint is trained for x" + std::to_string(model.config.scale) +
                        ", requested x" + std::to_string(a.scale));
    }
    r = evaluate_set(model_upscaler(model), a.method.empty() ? "XZNet" : a.method, a.set, a.scale, shave);
  }
  for (const auto& s : r.skipped) std::cerr << "warning: skipped " << s << "\n";
  for (const auto& s : r.images) std::printf("%-12s %.4f\n", s.name.c_str(), s.psnr_db);
  std::cout << render_table({r});
  if (!a.json.empty()) {
    const fs::path p = a.json;
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    write_text(p, to_json(r));
  }
  return kOk;
}

int run_table(const std::vector<std::string>& files) {
  std::vector<EvalResult> results;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw IoError("cannot open " + f);
    std::ostringstream ss;
    ss << in.rdbuf();
    results.push_back(eval_result_from_json(ss.str()));
  }
  std::cout << render_table(results);
  return kOk;
}

int fail(const char* prefix, int code, const std::string& msg) {
  std::cerr << "error[" << prefix << "]: " << msg << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"WARSHIP-XZNet x2 single-image super-resolution"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--threads", g.threads, "worker threads (default: $WARSHIP_SR_THREADS, else 1)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "master seed (overrides the config)");

  PrepareArgs pa;
  auto* prepare = app.add_subcommand("prepare", "build a patch dataset from a folder of images");
  prepare->add_option("--images", pa.images, "source image folder");
  prepare->add_option("--out", pa.out, "dataset output folder");
  prepare->add_option("--scale", pa.scale, "degradation factor")->check(CLI::PositiveNumber);
  prepare->add_option("--config", pa.config, "JSON run config")->check(CLI::ExistingFile);
  prepare->add_flag("--no-augment", pa.no_augment, "skip rotation/flip/scale augmentation");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model on a prepared dataset");
  train_cmd->add_option("--dataset", ta.dataset, "prepared dataset folder");
  train_cmd->add_option("--out", ta.out, "run output folder");
  train_cmd->add_option("--config", ta.config, "JSON run config")->check(CLI::ExistingFile);
  train_cmd->add_option("--max-epochs", ta.max_epochs, "epoch cap")->check(CLI::PositiveNumber);
  train_cmd->add_option("--max-steps", ta.max_steps, "SGD step cap")->check(CLI::PositiveNumber);

  SrArgs sa;
  auto* sr = app.add_subcommand("sr", "super-resolve one image");
  sr->add_option("--model", sa.model, "checkpoint")->required();
  sr->add_option("--input", sa.input, "low-resolution image")->required();
  sr->add_option("--out", sa.out, "output image (.png/.pgm/.ppm)")->required();
  sr->add_option("--scale", sa.scale, "upscaling factor (must match the checkpoint)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "mean Y-PSNR over a folder of images");
  auto* model_opt = eval->add_option("--model", ea.model, "checkpoint");
  auto* base_opt = eval->add_option("--baseline", ea.baseline, "baseline method (bicubic)");
  model_opt->excludes(base_opt);
  eval->add_option("--set", ea.set, "folder of ground-truth images")->required();
  eval->add_option("--scale", ea.scale, "degradation factor")->check(CLI::PositiveNumber);
  eval->add_option("--shave", ea.shave, "border pixels excluded (default: scale)");
  eval->add_option("--json", ea.json, "write the result as JSON");
  eval->add_option("--method", ea.method, "column label");

  std::vector<std::string> table_files;
  auto* table = app.add_subcommand("table", "render evaluation JSON files as one table");
  table->add_option("files", table_files, "result JSON files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", kUsage, e.what());
  }

  try {
    if (*prepare) return run_prepare(pa, g);
    if (*train_cmd) return run_train(ta, g);
    if (*sr) return run_sr(sa, g);
    if (*eval) return run_eval(ea, g);
    if (*table) return run_table(table_files);
  } catch (const UsageError& e) {
    return fail("usage", kUsage, e.what());
  } catch (const ConfigError& e) {
    return fail("config", kConfig, e.what());
  } catch (const IoError& e) {
    return fail("io", kIo, e.what());
  } catch (const CheckpointError& e) {
    if (e.kind() == CheckpointError::Kind::Io) return fail("io", kIo, e.what());
    return fail("format", kFormat, e.what());
  } catch (const NumericError& e) {
    return fail("numeric", kNumeric, e.what());
  } catch (const FormatError& e) {
    return fail("format", kFormat, e.what());
  } catch (const std::exception& e) {
    return fail("internal", kInternal, e.what());
  }
  return kInternal;
}
