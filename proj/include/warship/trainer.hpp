#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "warship/loss.hpp"
#include "warship/model.hpp"
#include "warship/patches.hpp"

namespace warship {

struct TrainConfig {
  std::size_t batch_size = 64;
  double lr_initial = 0.01;
  double lr_decay_factor = 10.0;
  std::size_t patience_epochs = 5;
  double lr_stop_threshold = 1e-6;
  double momentum = 0.9;
  double clip_tau = 0.01;  // 0 disables clipping
  std::uint64_t seed = 1;
  double val_fraction = 0.05;
  std::size_t max_epochs = 10000;
  std::size_t max_steps = 0;  // 0 = unbounded

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;
  double train_total = 0;
  double train_l1 = 0;
  double train_l2 = 0;
  double train_l3 = 0;
  double val_error = 0;
  double wall_time = 0;  // seconds; not part of the log line
};

struct TrainHistory {
  std::vector<EpochRecord> records;
};

// One line per epoch: "epoch=<n> lr=<g> l1=<g> l2=<g> l3=<g> total=<g> val=<g>",
// every real printed with 17 significant digits.
std::string format_log_line(const EpochRecord& r);
EpochRecord parse_log_line(const std::string& line);

// Per-element clip of g to [-clip_tau/lr, clip_tau/lr] (clip_tau > 0), then
// v <- momentum * v - lr * g and theta <- theta + v. Biases follow the same rule.
// Throws NumericError naming the entry if any gradient is non-finite; nothing is updated then.
template <typename T>
void sgd_step(ParameterSet<T>& params, const ParameterGradients<T>& grads,
              ParameterGradients<T>& velocity, double lr, const TrainConfig& cfg);

struct LrDecision {
  double lr = 0;
  bool dropped = false;
  bool stop = false;
};

// Divides the rate when the best validation error has not strictly improved for
// patience_epochs consecutive epochs since the best or the last drop (whichever is later).
// stop is set when the returned rate is strictly below lr_stop_threshold.
LrDecision lr_schedule_update(const TrainHistory& history, double current_lr, const TrainConfig& cfg);

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

// Seeded hold-out split; a pure function of (count, fraction, seed). Both lists ascending.
DataSplit split_dataset(std::size_t count, double val_fraction, std::uint64_t seed);

template <typename T>
struct StepResult {
  LossReport report;
  ParameterGradients<T> grads;
};

// Forward, the four cost terms, and the full gradient of the blended cost.
template <typename T>
StepResult<T> loss_and_gradients(const Model<T>& model, const Tensor4<T>& inputs,
                                 const Tensor4<T>& targets, const LossConfig& lcfg,
                                 std::size_t epoch);

// Gathers samples `indices` of the dataset into (n, 1, size, size) input/target tensors.
std::pair<Tensor4<float>, Tensor4<float>> gather_batch(const PatchDataset& data,
                                                       std::span<const std::size_t> indices);

// Mean of 0.5 * ||target - final||^2 over the given samples.
double validation_error(const Model<float>& model, const PatchDataset& data,
                        std::span<const std::size_t> indices, std::size_t batch_size);

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const Model<float>&, const EpochRecord&)> on_best;
};

struct TrainResult {
  TrainHistory history;
  Model<float> best_model;
  double best_val = 0;
  std::size_t steps = 0;
  std::string stop_reason;
};

// Mini-batch SGD with momentum until the rate falls below the stop threshold, max_epochs,
// or max_steps. `model` holds the final parameters on return. A non-finite loss throws
// NumericError after the best-validation model has already been handed to on_best.
TrainResult train(Model<float>& model, const PatchDataset& data, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const TrainHooks& hooks = {});

}  // namespace warship
