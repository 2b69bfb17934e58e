#include "warship/kernels.hpp"

#include <algorithm>

namespace warship {
namespace {

// Upper bound on im2col buffer elements per tile.
constexpr std::size_t kColumnBudget = std::size_t{1} << 16;
// Column block of the GEMM inner loops; a kRowBlock x kColumnBlock tile of C stays in registers.
constexpr std::size_t kColumnBlock = 64;
// The batch is split into at most this many fixed blocks for weight-gradient reduction.
constexpr std::size_t kMaxReductionBlocks = 8;

struct Geometry {
  std::size_t channels;
  std::size_t height;
  std::size_t width;
  std::size_t k;
  std::size_t pad;
  std::size_t rows_per_tile;

  std::size_t patch() const { return channels * k * k; }
};

template <typename T>
Geometry make_geometry(const Tensor4<T>& input, const ConvParams<T>& p) {
  Geometry g{input.c(), input.h(), input.w(), p.kernel_size(), (p.kernel_size() - 1) / 2, 0};
  const std::size_t per_row = g.patch() * g.width;
  g.rows_per_tile = std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1,
                                            g.height);
  return g;
}

// cols[(c*k + ky)*k + kx][(y - row0)*W + x] = src[c][y + ky - pad][x + kx - pad] (zero outside).
template <typename T>
void im2col(const T* src, const Geometry& g, std::size_t row0, std::size_t rows, T* cols) {
  const std::size_t plane = g.height * g.width;
  const std::size_t ncols = rows * g.width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* chan = src + c * plane;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* dst = cols + ((c * g.k + ky) * g.k + kx) * ncols;
        for (std::size_t r = 0; r < rows; ++r) {
          const long sy = static_cast<long>(row0 + r + ky) - static_cast<long>(g.pad);
          T* drow = dst + r * g.width;
          if (sy < 0 || sy >= static_cast<long>(g.height)) {
            std::fill(drow, drow + g.width, T(0));
            continue;
          }
          const T* srow = chan + static_cast<std::size_t>(sy) * g.width;
          for (std::size_t x = 0; x < g.width; ++x) {
            const long sx = static_cast<long>(x + kx) - static_cast<long>(g.pad);
            drow[x] = (sx < 0 || sx >= static_cast<long>(g.width)) ? T(0)
                                                                    : srow[static_cast<std::size_t>(sx)];
          }
        }
      }
    }
  }
}

// Rows of C updated together so each loaded B row feeds several accumulators.
constexpr std::size_t kRowBlock = 4;

// C[r][j0 + j] += sum_q a[r * a_row + q * a_red] * b[q * ldb + j0 + j] for r < R, j < W,
// with q running in index order.
template <typename T, std::size_t R, std::size_t W>
void block_update(std::size_t reduce, const T* a, std::size_t a_row, std::size_t a_red,
                  const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  T acc[R][W];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < W; ++j) acc[r][j] = c[r * ldc + j];
  for (std::size_t q = 0; q < reduce; ++q) {
    const T* brow = b + q * ldb;
    T coef[R];
    for (std::size_t r = 0; r < R; ++r) coef[r] = a[r * a_row + q * a_red];
    for (std::size_t r = 0; r < R; ++r) {
#pragma omp simd
      for (std::size_t j = 0; j < W; ++j) acc[r][j] += coef[r] * brow[j];
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < W; ++j) c[r * ldc + j] = acc[r][j];
}

// Same contract for one row and a runtime width.
template <typename T>
void row_update(std::size_t reduce, std::size_t width, const T* a, std::size_t a_red, const T* b,
                std::size_t ldb, T* c) {
  for (std::size_t q = 0; q < reduce; ++q) {
    const T av = a[q * a_red];
    const T* brow = b + q * ldb;
#pragma omp simd
    for (std::size_t j = 0; j < width; ++j) c[j] += av * brow[j];
  }
}

// C[rows x N] += coefficient-weighted sums of B rows; coefficient (r, q) = a[r * a_row + q * a_red].
template <typename T>
void gemm_rows(std::size_t rows, std::size_t n, std::size_t reduce, const T* a, std::size_t a_row,
               std::size_t a_red, const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  for (std::size_t j0 = 0; j0 < n; j0 += kColumnBlock) {
    const std::size_t width = std::min(n - j0, kColumnBlock);
    std::size_t r = 0;
    if (width == kColumnBlock) {
      for (; r + kRowBlock <= rows; r += kRowBlock) {
        block_update<T, kRowBlock, kColumnBlock>(reduce, a + r * a_row, a_row, a_red, b + j0, ldb,
                                                 c + r * ldc + j0, ldc);
      }
      for (; r < rows; ++r) {
        block_update<T, 1, kColumnBlock>(reduce, a + r * a_row, a_row, a_red, b + j0, ldb,
                                         c + r * ldc + j0, ldc);
      }
    }
    for (; r < rows; ++r) row_update(reduce, width, a + r * a_row, a_red, b + j0, ldb, c + r * ldc + j0);
  }
}

// C[M x N] += A[M x K] * B[K x N]. The sum over K runs in index order for every
// element, so the result does not depend on the blocking.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t kdim, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  gemm_rows(m, n, kdim, a, lda, std::size_t{1}, b, ldb, c, ldc);
}

// C[K x N] += A^T * B where A is [M x K] and B is [M x N].
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t kdim, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  gemm_rows(kdim, n, m, a, std::size_t{1}, lda, b, ldb, c, ldc);
}

// C[M x K] += A[M x N] * B^T where B is [K x N].
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t kdim, const T* a, std::size_t lda,
             const T* b, std::size_t ldb, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * lda;
    std::size_t p = 0;
    for (; p + kRowBlock <= kdim; p += kRowBlock) {
      const T* b0 = b + p * ldb;
      const T* b1 = b0 + ldb;
      const T* b2 = b1 + ldb;
      const T* b3 = b2 + ldb;
      T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
#pragma omp simd reduction(+ : s0, s1, s2, s3)
      for (std::size_t j = 0; j < n; ++j) {
        s0 += arow[j] * b0[j];
        s1 += arow[j] * b1[j];
        s2 += arow[j] * b2[j];
        s3 += arow[j] * b3[j];
      }
      c[i * ldc + p] += s0;
      c[i * ldc + p + 1] += s1;
      c[i * ldc + p + 2] += s2;
      c[i * ldc + p + 3] += s3;
    }
    for (; p < kdim; ++p) {
      const T* brow = b + p * ldb;
      T acc = T(0);
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * ldc + p] += acc;
    }
  }
}

// Bias-free filter whose forward pass is the input gradient of `p`: channels swapped, taps
// rotated by 180 degrees.
template <typename T>
ConvParams<T> flipped_transpose(const ConvParams<T>& p) {
  const std::size_t k = p.kernel_size();
  ConvParams<T> f(p.in_channels(), p.out_channels(), k, false);
  for (std::size_t o = 0; o < p.out_channels(); ++o)
    for (std::size_t c = 0; c < p.in_channels(); ++c)
      for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) f.weights(c, o, k - 1 - y, k - 1 - x) = p.weights(o, c, y, x);
  return f;
}

template <typename T>
void check_conv_input(const Tensor4<T>& input, const ConvParams<T>& p, const char* who) {
  validate(p);
  if (input.c() != p.in_channels()) {
    throw ConfigError(std::string(who) + ": input has " + std::to_string(input.c()) +
                      " channels, filter expects " + std::to_string(p.in_channels()));
  }
}

}  // namespace

template <typename T>
void validate(const ConvParams<T>& p) {
  const std::size_t k = p.weights.h();
  if (p.weights.w() != k) throw ConfigError("convolution kernel must be square");
  if (k % 2 == 0) throw ConfigError("convolution kernel size must be odd, got " + std::to_string(k));
  if (p.has_bias() && p.bias.size() != p.out_channels()) {
    throw ConfigError("bias length " + std::to_string(p.bias.size()) + " != out_channels " +
                      std::to_string(p.out_channels()));
  }
}

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const ConvParams<T>& p) {
  check_conv_input(input, p, "conv2d_forward");
  const Geometry g = make_geometry(input, p);
  const std::size_t out_ch = p.out_channels();
  const std::size_t plane = g.height * g.width;
  const std::size_t tiles = (g.height + g.rows_per_tile - 1) / g.rows_per_tile;
  const bool pointwise = g.k == 1;
  Tensor4<T> out(input.n(), out_ch, g.height, g.width);

  const long tasks = static_cast<long>(input.n() * tiles);
#pragma omp parallel
  {
    std::vector<T> cols(pointwise ? 0 : g.patch() * g.rows_per_tile * g.width);
#pragma omp for schedule(static)
    for (long task = 0; task < tasks; ++task) {
      const std::size_t n = static_cast<std::size_t>(task) / tiles;
      const std::size_t row0 = (static_cast<std::size_t>(task) % tiles) * g.rows_per_tile;
      const std::size_t rows = std::min(g.rows_per_tile, g.height - row0);
      const std::size_t ncols = rows * g.width;
      T* dst = out.sample(n).data() + row0 * g.width;
      for (std::size_t o = 0; o < out_ch; ++o) {
        std::fill_n(dst + o * plane, ncols, p.has_bias() ? p.bias[o] : T(0));
      }
      const T* src = input.sample(n).data();
      if (pointwise) {
        gemm_nn(out_ch, ncols, g.channels, p.weights.data(), g.channels, src + row0 * g.width,
                plane, dst, plane);
      } else {
        im2col(src, g, row0, rows, cols.data());
        gemm_nn(out_ch, ncols, g.patch(), p.weights.data(), g.patch(), cols.data(), ncols, dst,
                plane);
      }
    }
  }
  return out;
}

template <typename T>
ConvGradients<T> conv2d_backward(const Tensor4<T>& input, const ConvParams<T>& p,
                                 const Tensor4<T>& grad_out) {
  check_conv_input(input, p, "conv2d_backward");
  require_same_shape(grad_out.shape(), Shape4{input.n(), p.out_channels(), input.h(), input.w()},
                     "conv2d_backward grad_out");
  const Geometry g = make_geometry(input, p);
  const std::size_t out_ch = p.out_channels();
  const std::size_t plane = g.height * g.width;
  const std::size_t patch = g.patch();
  const bool pointwise = g.k == 1;
  const std::size_t batch = input.n();
  const std::size_t blocks = std::min(batch, kMaxReductionBlocks);

  ConvGradients<T> result{Tensor4<T>(input.shape()), Tensor4<T>(p.weights.shape()),
                          std::vector<T>(p.bias.size(), T(0))};
  std::vector<std::vector<T>> block_w(blocks, std::vector<T>(p.weights.size(), T(0)));
  std::vector<std::vector<T>> block_b(blocks, std::vector<T>(p.bias.size(), T(0)));

#pragma omp parallel
  {
    std::vector<T> cols(pointwise ? 0 : patch * g.rows_per_tile * g.width);
#pragma omp for schedule(static)
    for (long blk = 0; blk < static_cast<long>(blocks); ++blk) {
      const std::size_t b = static_cast<std::size_t>(blk);
      const std::size_t first = b * batch / blocks;
      const std::size_t last = (b + 1) * batch / blocks;
      T* gw = block_w[b].data();
      for (std::size_t n = first; n < last; ++n) {
        const T* src = input.sample(n).data();
        const T* gout = grad_out.sample(n).data();
        T* gin = result.input.sample(n).data();
        if (p.has_bias()) {
          for (std::size_t o = 0; o < out_ch; ++o) {
            T acc = T(0);
            const T* row = gout + o * plane;
            for (std::size_t j = 0; j < plane; ++j) acc += row[j];
            block_b[b][o] += acc;
          }
        }
        for (std::size_t row0 = 0; row0 < g.height; row0 += g.rows_per_tile) {
          const std::size_t rows = std::min(g.rows_per_tile, g.height - row0);
          const std::size_t ncols = rows * g.width;
          const T* gtile = gout + row0 * g.width;
          if (pointwise) {
            gemm_nt(out_ch, ncols, g.channels, gtile, plane, src + row0 * g.width, plane, gw,
                    g.channels);
            gemm_tn(out_ch, ncols, g.channels, p.weights.data(), g.channels, gtile, plane,
                    gin + row0 * g.width, plane);
          } else {
            im2col(src, g, row0, rows, cols.data());
            gemm_nt(out_ch, ncols, patch, gtile, plane, cols.data(), ncols, gw, patch);
          }
        }
      }
    }
  }

  if (!pointwise) result.input = conv2d_forward(grad_out, flipped_transpose(p));

  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t i = 0; i < block_w[b].size(); ++i) result.weights[i] += block_w[b][i];
    for (std::size_t i = 0; i < block_b[b].size(); ++i) result.bias[i] += block_b[b][i];
  }
  return result;
}

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& x) {
  Tensor4<T> out(x.shape());
  const long size = static_cast<long>(x.size());
#pragma omp parallel for simd schedule(static)
  for (long i = 0; i < size; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& x, const Tensor4<T>& grad_out) {
  require_same_shape(x.shape(), grad_out.shape(), "relu_backward");
  Tensor4<T> out(x.shape());
  const long size = static_cast<long>(x.size());
#pragma omp parallel for simd schedule(static)
  for (long i = 0; i < size; ++i) out[i] = x[i] > T(0) ? grad_out[i] : T(0);
  return out;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  Tensor4<T> out = a;
  add_inplace(out, b);
  return out;
}

template <typename T>
void add_inplace(Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  const long size = static_cast<long>(a.size());
#pragma omp parallel for simd schedule(static)
  for (long i = 0; i < size; ++i) a[i] += b[i];
}

#define WARSHIP_INSTANTIATE_KERNELS(T)                                                        \
  template void validate(const ConvParams<T>&);                                               \
  template Tensor4<T> conv2d_forward(const Tensor4<T>&, const ConvParams<T>&);                \
  template ConvGradients<T> conv2d_backward(const Tensor4<T>&, const ConvParams<T>&,          \
                                            const Tensor4<T>&);                               \
  template Tensor4<T> relu_forward(const Tensor4<T>&);                                        \
  template Tensor4<T> relu_backward(const Tensor4<T>&, const Tensor4<T>&);                    \
  template Tensor4<T> add(const Tensor4<T>&, const Tensor4<T>&);                              \
  template void add_inplace(Tensor4<T>&, const Tensor4<T>&);

WARSHIP_INSTANTIATE_KERNELS(float)
WARSHIP_INSTANTIATE_KERNELS(double)

#undef WARSHIP_INSTANTIATE_KERNELS

}  // namespace warship
