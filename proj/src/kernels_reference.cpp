#include "warship/kernels.hpp"

namespace warship::reference {

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const ConvParams<T>& p) {
  validate(p);
  if (input.c() != p.in_channels()) {
    throw ConfigError("conv2d_forward: input has " + std::to_string(input.c()) +
                      " channels, filter expects " + std::to_string(p.in_channels()));
  }
  const long k = static_cast<long>(p.kernel_size());
  const long pad = (k - 1) / 2;
  const long height = static_cast<long>(input.h());
  const long width = static_cast<long>(input.w());
  Tensor4<T> out(input.n(), p.out_channels(), input.h(), input.w());

  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t o = 0; o < p.out_channels(); ++o) {
      const T b = p.has_bias() ? p.bias[o] : T(0);
      for (long y = 0; y < height; ++y) {
        for (long x = 0; x < width; ++x) {
          T acc = b;
          for (std::size_t c = 0; c < p.in_channels(); ++c) {
            for (long ky = 0; ky < k; ++ky) {
              const long sy = y + ky - pad;
              if (sy < 0 || sy >= height) continue;
              for (long kx = 0; kx < k; ++kx) {
                const long sx = x + kx - pad;
                if (sx < 0 || sx >= width) continue;
                acc += input(n, c, sy, sx) * p.weights(o, c, ky, kx);
              }
            }
          }
          out(n, o, y, x) = acc;
        }
      }
    }
  }
  return out;
}

template <typename T>
ConvGradients<T> conv2d_backward(const Tensor4<T>& input, const ConvParams<T>& p,
                                 const Tensor4<T>& grad_out) {
  validate(p);
  if (input.c() != p.in_channels()) {
    throw ConfigError("conv2d_backward: input/filter channel mismatch");
  }
  require_same_shape(grad_out.shape(), Shape4{input.n(), p.out_channels(), input.h(), input.w()},
                     "conv2d_backward grad_out");
  const long k = static_cast<long>(p.kernel_size());
  const long pad = (k - 1) / 2;
  const long height = static_cast<long>(input.h());
  const long width = static_cast<long>(input.w());

  ConvGradients<T> g{Tensor4<T>(input.shape()), Tensor4<T>(p.weights.shape()),
                     std::vector<T>(p.bias.size(), T(0))};
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t o = 0; o < p.out_channels(); ++o) {
      for (long y = 0; y < height; ++y) {
        for (long x = 0; x < width; ++x) {
          const T go = grad_out(n, o, y, x);
          if (p.has_bias()) g.bias[o] += go;
          for (std::size_t c = 0; c < p.in_channels(); ++c) {
            for (long ky = 0; ky < k; ++ky) {
              const long sy = y + ky - pad;
              if (sy < 0 || sy >= height) continue;
              for (long kx = 0; kx < k; ++kx) {
                const long sx = x + kx - pad;
                if (sx < 0 || sx >= width) continue;
                g.input(n, c, sy, sx) += p.weights(o, c, ky, kx) * go;
                g.weights(o, c, ky, kx) += input(n, c, sy, sx) * go;
              }
            }
          }
        }
      }
    }
  }
  return g;
}

template Tensor4<float> conv2d_forward(const Tensor4<float>&, const ConvParams<float>&);
template Tensor4<double> conv2d_forward(const Tensor4<double>&, const ConvParams<double>&);
template ConvGradients<float> conv2d_backward(const Tensor4<float>&, const ConvParams<float>&,
                                              const Tensor4<float>&);
template ConvGradients<double> conv2d_backward(const Tensor4<double>&, const ConvParams<double>&,
                                               const Tensor4<double>&);

}  // namespace warship::reference
