#pragma once

#include <cstddef>
#include <vector>

#include "warship/tensor.hpp"

namespace warship {

// Filter bank of one convolution: weights (out, in, k, k) and a per-output bias.
// An empty bias means the layer has no bias term (used by the merge layer).
template <typename T>
struct ConvParams {
  Tensor4<T> weights;
  std::vector<T> bias;

  ConvParams() = default;
  ConvParams(std::size_t out_channels, std::size_t in_channels, std::size_t k, bool with_bias = true)
      : weights(out_channels, in_channels, k, k),
        bias(with_bias ? out_channels : 0, T(0)) {}

  std::size_t out_channels() const { return weights.n(); }
  std::size_t in_channels() const { return weights.c(); }
  std::size_t kernel_size() const { return weights.h(); }
  bool has_bias() const { return !bias.empty(); }

  template <typename U>
  ConvParams<U> cast() const {
    ConvParams<U> out;
    out.weights = weights.template cast<U>();
    out.bias.assign(bias.begin(), bias.end());
    return out;
  }

  bool operator==(const ConvParams&) const = default;
};

template <typename T>
struct ConvGradients {
  Tensor4<T> input;
  Tensor4<T> weights;
  std::vector<T> bias;
};

// Throws ConfigError if the filter bank is not square, odd, and bias-consistent.
template <typename T>
void validate(const ConvParams<T>& p);

// Same-padded cross-correlation: zero padding (k-1)/2, stride 1, bias per output channel.
// Fast path: row-tiled im2col + GEMM, parallel over the batch with OpenMP.
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const ConvParams<T>& p);

// Exact gradients of sum(grad_out * conv2d_forward(input, p)).
// Weight/bias gradients are reduced over the batch in a fixed order, independent of
// the thread count.
template <typename T>
ConvGradients<T> conv2d_backward(const Tensor4<T>& input, const ConvParams<T>& p,
                                 const Tensor4<T>& grad_out);

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x);

// Passes grad_out where x > 0; the subgradient at 0 is 0.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& grad_out);

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b);

// In-place a += b.
template <typename T>
void add_inplace(Tensor4<T>& a, const Tensor4<T>& b);

namespace reference {

// Serial direct-loop convolution. Kept as the ground truth the fast path is checked
// against and as the baseline of the benchmark.
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const ConvParams<T>& p);

template <typename T>
ConvGradients<T> conv2d_backward(const Tensor4<T>& input, const ConvParams<T>& p,
                                 const Tensor4<T>& grad_out);

}  // namespace reference

}  // namespace warship
