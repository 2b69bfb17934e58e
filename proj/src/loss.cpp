#include "warship/loss.hpp"

#include <algorithm>

namespace warship {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss: alpha must lie in [0, 1]");
  if (!(beta >= 0.0)) throw ConfigError("loss: beta must be >= 0");
  if (alpha_schedule == AlphaSchedule::LinearDecay && alpha_decay_epochs == 0) {
    throw ConfigError("loss: linear alpha decay needs alpha_decay_epochs >= 1");
  }
}

double LossConfig::alpha_at(std::size_t epoch) const {
  if (alpha_schedule == AlphaSchedule::Constant) return alpha;
  const double frac = static_cast<double>(epoch) / static_cast<double>(alpha_decay_epochs);
  return alpha * std::max(0.0, 1.0 - frac);
}

template <typename T>
IntermediateLoss<T> loss_intermediate(const Tensor4<T>& targets,
                                      const std::vector<Tensor4<T>>& intermediates) {
  if (intermediates.empty()) throw ConfigError("loss_intermediate: no intermediate images");
  const double R = static_cast<double>(intermediates.size());
  const double N = static_cast<double>(targets.n());

  IntermediateLoss<T> out;
  out.grads.reserve(intermediates.size());
  for (const auto& y_r : intermediates) {
    require_same_shape(y_r.shape(), targets.shape(), "loss_intermediate");
    Tensor4<T> grad(y_r.shape());
    double sq = 0;
    for (std::size_t i = 0; i < y_r.size(); ++i) {
      const double d = static_cast<double>(y_r[i]) - static_cast<double>(targets[i]);
      sq += d * d;
      grad[i] = static_cast<T>(d / (R * N));
    }
    out.value += sq / (2.0 * R * N);
    out.grads.push_back(std::move(grad));
  }
  return out;
}

template <typename T>
FinalLoss<T> loss_final(const Tensor4<T>& targets, const Tensor4<T>& finals) {
  require_same_shape(finals.shape(), targets.shape(), "loss_final");
  const double N = static_cast<double>(targets.n());
  FinalLoss<T> out{0.0, Tensor4<T>(finals.shape())};
  double sq = 0;
  for (std::size_t i = 0; i < finals.size(); ++i) {
    const double d = static_cast<double>(finals[i]) - static_cast<double>(targets[i]);
    sq += d * d;
    out.grad[i] = static_cast<T>(d / N);
  }
  out.value = sq / (2.0 * N);
  return out;
}

template <typename T>
RegularizationLoss<T> loss_regularization(const ParameterSet<T>& params, double beta) {
  RegularizationLoss<T> out{0.0, zero_gradients(params)};
  if (beta == 0.0) return out;
  for (std::size_t e = 0; e < kParamCount; ++e) {
    const auto& entry = params.entries[e];
    if (entry.decay_exempt) continue;
    const auto& w = entry.params.weights;
    auto& g = out.grads[e].weights;
    double sq = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double v = static_cast<double>(w[i]);
      sq += v * v;
      g[i] = static_cast<T>(2.0 * beta * v);
    }
    out.value += beta * sq;
  }
  return out;
}

LossReport loss_total(double l1, double l2, double l3, const LossConfig& cfg, std::size_t epoch) {
  LossReport r;
  r.alpha = cfg.alpha_at(epoch);
  r.l1 = l1;
  r.l2 = l2;
  r.l3 = l3;
  r.total = r.alpha * l1 + (1.0 - r.alpha) * l2 + l3;
  return r;
}

template IntermediateLoss<float> loss_intermediate(const Tensor4<float>&, const std::vector<Tensor4<float>>&);
template IntermediateLoss<double> loss_intermediate(const Tensor4<double>&, const std::vector<Tensor4<double>>&);
template FinalLoss<float> loss_final(const Tensor4<float>&, const Tensor4<float>&);
template FinalLoss<double> loss_final(const Tensor4<double>&, const Tensor4<double>&);
template RegularizationLoss<float> loss_regularization(const ParameterSet<float>&, double);
template RegularizationLoss<double> loss_regularization(const ParameterSet<double>&, double);

}  // namespace warship
