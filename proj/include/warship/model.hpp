#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "warship/kernels.hpp"

namespace warship {

struct ModelConfig {
  std::size_t recurrences = 8;
  std::size_t f_embed = 192;
  std::size_t f_infer = 96;
  std::size_t kernel_size = 3;
  std::size_t scale = 2;

  // Throws ConfigError unless R >= 1, f_embed even, f_infer == f_embed / 2, kernel odd, scale >= 1.
  void validate() const;

  // Convolutional layers on the unrolled path: Enet 3, one per recurrence, Rnet 3.
  std::size_t layer_count() const { return 3 + recurrences + 3; }

  bool operator==(const ModelConfig&) const = default;
};

enum class ParamId : std::size_t {
  EnetConv1 = 0,
  EnetConv2,
  EnetShrink,
  InetRecursive,
  RnetExpand,
  RnetToImage,
  RnetMerge,
};

inline constexpr std::size_t kParamCount = 7;

inline constexpr std::array<std::string_view, kParamCount> kParamNames = {
    "enet.conv1", "enet.conv2", "enet.shrink", "inet.recursive",
    "rnet.expand", "rnet.to_image", "rnet.merge"};

// First layers of Enet and Rnet are excluded from the Tikhonov penalty.
constexpr bool is_decay_exempt(ParamId id) {
  return id == ParamId::EnetConv1 || id == ParamId::RnetExpand;
}

constexpr std::size_t index_of(ParamId id) { return static_cast<std::size_t>(id); }

template <typename T>
struct ParameterEntry {
  std::string_view name;
  ConvParams<T> params;
  bool decay_exempt = false;

  bool operator==(const ParameterEntry&) const = default;
};

// The seven distinct filter banks of the network. inet.recursive is stored once and
// applied R times; rnet.to_image and rnet.expand are shared by every recurrence branch.
template <typename T>
struct ParameterSet {
  std::array<ParameterEntry<T>, kParamCount> entries;

  ConvParams<T>& operator[](ParamId id) { return entries[index_of(id)].params; }
  const ConvParams<T>& operator[](ParamId id) const { return entries[index_of(id)].params; }

  auto begin() { return entries.begin(); }
  auto end() { return entries.end(); }
  auto begin() const { return entries.begin(); }
  auto end() const { return entries.end(); }

  std::size_t scalar_count() const;

  bool operator==(const ParameterSet&) const = default;
};

// Same layout as ParameterSet: weights/bias slots hold d(loss)/d(weights|bias).
template <typename T>
using ParameterGradients = std::array<ConvParams<T>, kParamCount>;

template <typename T>
ParameterGradients<T> zero_gradients(const ParameterSet<T>& params);

template <typename T>
void accumulate(ParameterGradients<T>& into, const ParameterGradients<T>& from);

template <typename T>
struct Model {
  ModelConfig config;
  ParameterSet<T> params;

  template <typename U>
  Model<U> cast() const;

  bool operator==(const Model&) const = default;
};

// Everything forward() computed, kept for backward(). `z_*` are pre-activations.
template <typename T>
struct ForwardTrace {
  Tensor4<T> input;
  Tensor4<T> z_conv1, a_conv1;
  Tensor4<T> z_conv2, a_conv2;
  Tensor4<T> z_shrink;
  std::vector<Tensor4<T>> hidden;     // h_0 .. h_R (R + 1 entries)
  std::vector<Tensor4<T>> z_recur;    // conv(h_{r-1}) for r = 1..R
  std::vector<Tensor4<T>> z_expand;   // per recurrence
  std::vector<Tensor4<T>> expanded;   // ReLU(z_expand)
  std::vector<Tensor4<T>> intermediate_images;  // y_1 .. y_R, one channel each
  Tensor4<T> stacked;                 // (n, R, h, w) stack of the y_r
  Tensor4<T> final_image;
};

// He-normal weights for non-recursive layers, identity recursive kernel, zero biases,
// merge weights 1/R. Weights are drawn in entry order, row-major, from Rng(seed).
template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed);

// Input is (n, 1, h, w): bicubic-upscaled luminance in [0, 1].
template <typename T>
ForwardTrace<T> forward(const Model<T>& model, const Tensor4<T>& input);

// Final image only, without retaining intermediates.
template <typename T>
Tensor4<T> infer(const Model<T>& model, const Tensor4<T>& input);

// Gradients for all seven entries given upstream gradients on the final image and on
// every intermediate image. Shared entries sum their per-recurrence contributions.
template <typename T>
ParameterGradients<T> backward(const Model<T>& model, const ForwardTrace<T>& trace,
                               const Tensor4<T>& grad_final,
                               const std::vector<Tensor4<T>>& grads_intermediate);

// Stack R single-channel tensors into one (n, R, h, w) tensor.
template <typename T>
Tensor4<T> stack_channels(const std::vector<Tensor4<T>>& images);

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out;
  out.config = config;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    out.params.entries[i].name = params.entries[i].name;
    out.params.entries[i].params = params.entries[i].params.template cast<U>();
    out.params.entries[i].decay_exempt = params.entries[i].decay_exempt;
  }
  return out;
}

}  // namespace warship
