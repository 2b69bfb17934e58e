#include "warship/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "warship/rng.hpp"

namespace warship {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr_initial > lr_stop_threshold)) throw ConfigError("train: lr_initial must exceed lr_stop_threshold");
  if (!(lr_decay_factor > 1.0)) throw ConfigError("train: lr_decay_factor must be > 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  if (!(clip_tau >= 0.0)) throw ConfigError("train: clip_tau must be >= 0");
  if (!(val_fraction > 0.0 && val_fraction < 0.5)) throw ConfigError("train: val_fraction must lie in (0, 0.5)");
  if (patience_epochs < 1) throw ConfigError("train: patience_epochs must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
}

std::string format_log_line(const EpochRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "epoch=%zu lr=%.17g l1=%.17g l2=%.17g l3=%.17g total=%.17g val=%.17g",
                r.epoch, r.lr, r.train_l1, r.train_l2, r.train_l3, r.train_total, r.val_error);
  return buf;
}

EpochRecord parse_log_line(const std::string& line) {
  static const char* kKeys[] = {"epoch", "lr", "l1", "l2", "l3", "total", "val"};
  EpochRecord r;
  std::istringstream in(line);
  std::string field;
  std::size_t i = 0;
  while (in >> field) {
    if (i >= 7) throw FormatError("log line has extra fields: " + line);
    const auto eq = field.find('=');
    if (eq == std::string::npos || field.substr(0, eq) != kKeys[i]) {
      throw FormatError("log field " + std::to_string(i) + " should be '" + kKeys[i] + "': " + line);
    }
    const std::string value = field.substr(eq + 1);
    switch (i) {
      case 0: r.epoch = std::stoul(value); break;
      case 1: r.lr = std::stod(value); break;
      case 2: r.train_l1 = std::stod(value); break;
      case 3: r.train_l2 = std::stod(value); break;
      case 4: r.train_l3 = std::stod(value); break;
      case 5: r.train_total = std::stod(value); break;
      case 6: r.val_error = std::stod(value); break;
    }
    ++i;
  }
  if (i != 7) throw FormatError("log line has " + std::to_string(i) + " fields, expected 7");
  return r;
}

template <typename T>
void sgd_step(ParameterSet<T>& params, const ParameterGradients<T>& grads,
              ParameterGradients<T>& velocity, double lr, const TrainConfig& cfg) {
  for (std::size_t e = 0; e < kParamCount; ++e) {
    const auto& g = grads[e];
    const bool finite = g.weights.all_finite() &&
                        std::all_of(g.bias.begin(), g.bias.end(), [](T v) { return std::isfinite(v); });
    if (!finite) {
      throw NumericError("non-finite gradient in parameter entry '" +
                         std::string(params.entries[e].name) + "'");
    }
  }
  const bool clip = cfg.clip_tau > 0.0;
  const double bound = clip ? cfg.clip_tau / lr : 0.0;
  const double mom = cfg.momentum;
  auto update = [&](T& theta, T& v, T grad) {
    double gv = static_cast<double>(grad);
    if (clip) gv = std::clamp(gv, -bound, bound);
    const double nv = mom * static_cast<double>(v) - lr * gv;
    v = static_cast<T>(nv);
    theta = static_cast<T>(static_cast<double>(theta) + nv);
  };
  for (std::size_t e = 0; e < kParamCount; ++e) {
    auto& p = params.entries[e].params;
    auto& v = velocity[e];
    for (std::size_t i = 0; i < p.weights.size(); ++i) update(p.weights[i], v.weights[i], grads[e].weights[i]);
    for (std::size_t i = 0; i < p.bias.size(); ++i) update(p.bias[i], v.bias[i], grads[e].bias[i]);
  }
}

LrDecision lr_schedule_update(const TrainHistory& history, double current_lr, const TrainConfig& cfg) {
  LrDecision d{current_lr, false, false};
  if (history.records.empty()) return d;

  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  const auto& recs = history.records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].val_error < best) {
      best = recs[i].val_error;
      stale = 0;
    } else {
      ++stale;
    }
    // A drop already happened after epoch i: the counter restarts.
    if (i + 1 < recs.size() && recs[i + 1].lr < recs[i].lr) stale = 0;
  }
  if (stale >= cfg.patience_epochs) {
    d.lr = current_lr / cfg.lr_decay_factor;
    d.dropped = true;
  }
  d.stop = d.lr < cfg.lr_stop_threshold;
  return d;
}

DataSplit split_dataset(std::size_t count, double val_fraction, std::uint64_t seed) {
  if (count < 2) throw ConfigError("split: at least 2 patches are needed for a train/validation split");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, seed_stream::kSplit));
  rng.shuffle(std::span<std::size_t>(order));
  const auto want = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(count)));
  const std::size_t n_val = std::clamp<std::size_t>(want, 1, count - 1);
  DataSplit s;
  s.val.assign(order.begin(), order.begin() + static_cast<long>(n_val));
  s.train.assign(order.begin() + static_cast<long>(n_val), order.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

template <typename T>
StepResult<T> loss_and_gradients(const Model<T>& model, const Tensor4<T>& inputs,
                                 const Tensor4<T>& targets, const LossConfig& lcfg,
                                 std::size_t epoch) {
  const ForwardTrace<T> trace = forward(model, inputs);
  IntermediateLoss<T> l1 = loss_intermediate(targets, trace.intermediate_images);
  FinalLoss<T> l2 = loss_final(targets, trace.final_image);
  RegularizationLoss<T> l3 = loss_regularization(model.params, lcfg.beta);
  const LossReport report = loss_total(l1.value, l2.value, l3.value, lcfg, epoch);

  const T a = static_cast<T>(report.alpha);
  const T b = static_cast<T>(1.0 - report.alpha);
  for (auto& g : l1.grads) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= a;
  }
  for (std::size_t i = 0; i < l2.grad.size(); ++i) l2.grad[i] *= b;

  StepResult<T> out{report, backward(model, trace, l2.grad, l1.grads)};
  accumulate(out.grads, l3.grads);
  return out;
}

std::pair<Tensor4<float>, Tensor4<float>> gather_batch(const PatchDataset& data,
                                                       std::span<const std::size_t> indices) {
  if (indices.empty()) throw ConfigError("gather_batch: empty batch");
  const std::size_t s = data.patch_size;
  Tensor4<float> in(indices.size(), 1, s, s);
  Tensor4<float> tg(indices.size(), 1, s, s);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto src_in = data.input(indices[b]);
    const auto src_tg = data.target(indices[b]);
    std::copy(src_in.begin(), src_in.end(), in.sample(b).begin());
    std::copy(src_tg.begin(), src_tg.end(), tg.sample(b).begin());
  }
  return {std::move(in), std::move(tg)};
}

double validation_error(const Model<float>& model, const PatchDataset& data,
                        std::span<const std::size_t> indices, std::size_t batch_size) {
  if (indices.empty()) throw ConfigError("validation_error: no samples");
  double sum = 0.0;
  for (std::size_t first = 0; first < indices.size(); first += batch_size) {
    const auto chunk = indices.subspan(first, std::min(batch_size, indices.size() - first));
    auto [in, tg] = gather_batch(data, chunk);
    const Tensor4<float> out = infer(model, in);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double d = static_cast<double>(out[i]) - static_cast<double>(tg[i]);
      sum += 0.5 * d * d;
    }
  }
  return sum / static_cast<double>(indices.size());
}

TrainResult train(Model<float>& model, const PatchDataset& data, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const TrainHooks& hooks) {
  tcfg.validate();
  lcfg.validate();
  if (data.size() == 0) throw ConfigError("train: dataset is empty");
  const DataSplit split = split_dataset(data.size(), tcfg.val_fraction, tcfg.seed);

  TrainResult result;
  result.best_model = model;
  result.best_val = std::numeric_limits<double>::infinity();
  ParameterGradients<float> velocity = zero_gradients(model.params);
  Rng shuffle_rng(derive_seed(tcfg.seed, seed_stream::kShuffle));
  std::vector<std::size_t> order = split.train;
  double lr = tcfg.lr_initial;

  for (std::size_t epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double sum_l1 = 0, sum_l2 = 0, sum_l3 = 0, sum_total = 0;
    std::size_t seen = 0;
    bool step_budget_hit = false;
    for (std::size_t first = 0; first < order.size(); first += tcfg.batch_size) {
      const std::size_t n = std::min(tcfg.batch_size, order.size() - first);
      auto [in, tg] = gather_batch(data, std::span<const std::size_t>(order).subspan(first, n));
      StepResult<float> step = loss_and_gradients(model, in, tg, lcfg, epoch);
      if (!std::isfinite(step.report.total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                           std::to_string(result.steps + 1));
      }
      sgd_step(model.params, step.grads, velocity, lr, tcfg);
      ++result.steps;
      const double w = static_cast<double>(n);
      sum_l1 += w * step.report.l1;
      sum_l2 += w * step.report.l2;
      sum_l3 += w * step.report.l3;
      sum_total += w * step.report.total;
      seen += n;
      if (tcfg.max_steps != 0 && result.steps >= tcfg.max_steps) {
        step_budget_hit = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    const double denom = static_cast<double>(seen);
    rec.train_l1 = sum_l1 / denom;
    rec.train_l2 = sum_l2 / denom;
    rec.train_l3 = sum_l3 / denom;
    rec.train_total = sum_total / denom;
    rec.val_error = validation_error(model, data, split.val, tcfg.batch_size);
    if (!std::isfinite(rec.val_error)) {
      throw NumericError("non-finite validation error at epoch " + std::to_string(rec.epoch));
    }
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.records.push_back(rec);
    if (rec.val_error < result.best_val) {
      result.best_val = rec.val_error;
      result.best_model = model;
      if (hooks.on_best) hooks.on_best(model, rec);
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (step_budget_hit) {
      result.stop_reason = "max_steps reached";
      return result;
    }
    const LrDecision d = lr_schedule_update(result.history, lr, tcfg);
    if (d.stop) {
      result.stop_reason = "learning rate fell below the stop threshold";
      return result;
    }
    lr = d.lr;
  }
  result.stop_reason = "max_epochs reached";
  return result;
}

template void sgd_step(ParameterSet<float>&, const ParameterGradients<float>&,
                       ParameterGradients<float>&, double, const TrainConfig&);
template void sgd_step(ParameterSet<double>&, const ParameterGradients<double>&,
                       ParameterGradients<double>&, double, const TrainConfig&);
template StepResult<float> loss_and_gradients(const Model<float>&, const Tensor4<float>&,
                                              const Tensor4<float>&, const LossConfig&, std::size_t);
template StepResult<double> loss_and_gradients(const Model<double>&, const Tensor4<double>&,
                                               const Tensor4<double>&, const LossConfig&, std::size_t);

}  // namespace warship
