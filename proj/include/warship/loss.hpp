#pragma once

#include <cstddef>
#include <vector>

#include "warship/model.hpp"

namespace warship {

enum class AlphaSchedule { Constant, LinearDecay };

struct LossConfig {
  double alpha = 0.5;
  double beta = 1e-4;
  AlphaSchedule alpha_schedule = AlphaSchedule::Constant;
  // Epochs over which alpha decays linearly to zero (LinearDecay only).
  std::size_t alpha_decay_epochs = 0;

  void validate() const;
  // alpha in effect during `epoch` (0-based).
  double alpha_at(std::size_t epoch) const;
};

struct LossReport {
  double l1 = 0;
  double l2 = 0;
  double l3 = 0;
  double total = 0;
  double alpha = 0;
};

template <typename T>
struct IntermediateLoss {
  double value = 0;
  std::vector<Tensor4<T>> grads;  // d/dy_r, one per recurrence
};

template <typename T>
struct FinalLoss {
  double value = 0;
  Tensor4<T> grad;
};

template <typename T>
struct RegularizationLoss {
  double value = 0;
  ParameterGradients<T> grads;
};

// sum_i sum_r ||y_i - y_{r,i}||^2 / (2 R N), N = targets.n(). Intermediates are (N,1,h,w) each.
template <typename T>
IntermediateLoss<T> loss_intermediate(const Tensor4<T>& targets,
                                      const std::vector<Tensor4<T>>& intermediates);

// sum_i ||y_i - final_i||^2 / (2 N).
template <typename T>
FinalLoss<T> loss_final(const Tensor4<T>& targets, const Tensor4<T>& finals);

// beta times the squared weight norm of every non-exempt entry; biases carry no penalty.
template <typename T>
RegularizationLoss<T> loss_regularization(const ParameterSet<T>& params, double beta);

LossReport loss_total(double l1, double l2, double l3, const LossConfig& cfg, std::size_t epoch);

}  // namespace warship
