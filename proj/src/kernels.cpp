#include "dnres/kernels.hpp"

#include <algorithm>
#include <string>

namespace dnres {
namespace {

constexpr std::size_t kColumnBudget = std::size_t{1} << 22;  // elements per im2col chunk
constexpr std::size_t kBlockK = 128;
constexpr std::size_t kBlockN = 256;

// C[M x N] += A[M x K] * B[K x N], row-major with leading dimensions.
// Each C element accumulates over k in increasing order, so the result does
// not depend on blocking or vector width.
template <class T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, std::size_t lda, const T* B,
             std::size_t ldb, T* C, std::size_t ldc) {
  for (std::size_t j0 = 0; j0 < N; j0 += kBlockN) {
    const std::size_t j1 = std::min(N, j0 + kBlockN);
    const std::size_t nj = j1 - j0;
    for (std::size_t k0 = 0; k0 < K; k0 += kBlockK) {
      const std::size_t k1 = std::min(K, k0 + kBlockK);
      std::size_t i = 0;
      for (; i + 4 <= M; i += 4) {
        T* c0 = C + (i + 0) * ldc + j0;
        T* c1 = C + (i + 1) * ldc + j0;
        T* c2 = C + (i + 2) * ldc + j0;
        T* c3 = C + (i + 3) * ldc + j0;
        for (std::size_t k = k0; k < k1; ++k) {
          const T a0 = A[(i + 0) * lda + k];
          const T a1 = A[(i + 1) * lda + k];
          const T a2 = A[(i + 2) * lda + k];
          const T a3 = A[(i + 3) * lda + k];
          const T* b = B + k * ldb + j0;
          for (std::size_t j = 0; j < nj; ++j) {
            const T bj = b[j];
            c0[j] += a0 * bj;
            c1[j] += a1 * bj;
            c2[j] += a2 * bj;
            c3[j] += a3 * bj;
          }
        }
      }
      for (; i < M; ++i) {
        T* c = C + i * ldc + j0;
        for (std::size_t k = k0; k < k1; ++k) {
          const T a = A[i * lda + k];
          const T* b = B + k * ldb + j0;
          for (std::size_t j = 0; j < nj; ++j) c[j] += a * b[j];
        }
      }
    }
  }
}

template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* src, std::size_t lds, T* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * lds + c];
  }
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, out_h, out_w;
  int pad;
};

// col[(c,u,v)][(y - y0) * out_w + x] = padded input at (c, y + u, x + v).
template <class T>
void im2col(const T* in, const ConvGeometry& g, std::size_t y0, std::size_t y1, T* col) {
  const std::size_t ncols = (y1 - y0) * g.out_w;
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = in + c * g.height * g.width;
    for (std::size_t u = 0; u < g.kernel; ++u) {
      for (std::size_t v = 0; v < g.kernel; ++v) {
        T* row = col + ((c * g.kernel + u) * g.kernel + v) * ncols;
        for (std::size_t y = y0; y < y1; ++y) {
          T* dst = row + (y - y0) * g.out_w;
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + u) - g.pad;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = plane + iy * W;
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + v) - g.pad;
            dst[x] = (ix >= 0 && ix < W) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

// Inverse scatter of im2col: grad_in += col contributions.
template <class T>
void col2im(const T* col, const ConvGeometry& g, std::size_t y0, std::size_t y1, T* grad_in) {
  const std::size_t ncols = (y1 - y0) * g.out_w;
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = grad_in + c * g.height * g.width;
    for (std::size_t u = 0; u < g.kernel; ++u) {
      for (std::size_t v = 0; v < g.kernel; ++v) {
        const T* row = col + ((c * g.kernel + u) * g.kernel + v) * ncols;
        for (std::size_t y = y0; y < y1; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + u) - g.pad;
          if (iy < 0 || iy >= H) continue;
          const T* src = row + (y - y0) * g.out_w;
          T* dst = plane + iy * W;
          for (std::size_t x = 0; x < g.out_w; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + v) - g.pad;
            if (ix >= 0 && ix < W) dst[ix] += src[x];
          }
        }
      }
    }
  }
}

template <class T>
ConvGeometry check_conv(const char* op, const Tensor<T>& input, const ConvParams<T>& p) {
  if (p.weights.h() != p.weights.w()) throw ShapeError(op, "kernel width", p.weights.h(), p.weights.w());
  if (p.kernel() % 2 == 0) throw InvalidArgument(std::string(op) + ": kernel size must be odd");
  if (p.pad < 0) throw InvalidArgument(std::string(op) + ": padding must be >= 0");
  if (p.bias.size() != p.out_channels()) throw ShapeError(op, "bias length", p.out_channels(), p.bias.size());
  if (input.c() != p.in_channels()) throw ShapeError(op, "input channels", p.in_channels(), input.c());
  const std::size_t k = p.kernel();
  const std::size_t ph = input.h() + 2 * static_cast<std::size_t>(p.pad);
  const std::size_t pw = input.w() + 2 * static_cast<std::size_t>(p.pad);
  if (ph < k) throw ShapeError(op, "padded height", k, ph);
  if (pw < k) throw ShapeError(op, "padded width", k, pw);
  return {input.c(), input.h(), input.w(), k, ph - k + 1, pw - k + 1, p.pad};
}

template <class T>
ConvGeometry check_depthwise(const char* op, const Tensor<T>& input, const DepthwiseConvParams<T>& p) {
  if (p.weights.c() != 1) throw ShapeError(op, "filter depth", 1, p.weights.c());
  if (p.weights.h() != p.weights.w()) throw ShapeError(op, "kernel width", p.weights.h(), p.weights.w());
  if (p.kernel() % 2 == 0) throw InvalidArgument(std::string(op) + ": kernel size must be odd");
  if (p.pad < 0) throw InvalidArgument(std::string(op) + ": padding must be >= 0");
  if (p.bias.size() != p.channels()) throw ShapeError(op, "bias length", p.channels(), p.bias.size());
  if (input.c() != p.channels()) throw ShapeError(op, "input channels", p.channels(), input.c());
  const std::size_t k = p.kernel();
  const std::size_t ph = input.h() + 2 * static_cast<std::size_t>(p.pad);
  const std::size_t pw = input.w() + 2 * static_cast<std::size_t>(p.pad);
  if (ph < k) throw ShapeError(op, "padded height", k, ph);
  if (pw < k) throw ShapeError(op, "padded width", k, pw);
  return {input.c(), input.h(), input.w(), k, ph - k + 1, pw - k + 1, p.pad};
}

template <class T>
bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.pad == 0;
}

std::size_t rows_per_chunk(const ConvGeometry& g) {
  const std::size_t per_row = g.channels * g.kernel * g.kernel * g.out_w;
  return std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1, g.out_h);
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t k, int pad) {
  const std::size_t padded = in + 2 * static_cast<std::size_t>(pad);
  return padded >= k ? padded - k + 1 : 0;
}

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvParams<T>& p) {
  const ConvGeometry g = check_conv("conv2d_forward", input, p);
  const std::size_t O = p.out_channels();
  const std::size_t K = g.channels * g.kernel * g.kernel;
  const std::size_t out_plane = g.out_h * g.out_w;
  Tensor<T> out(input.n(), O, g.out_h, g.out_w);
  const T* W = p.weights.data().data();
  const std::size_t chunk = rows_per_chunk(g);
  std::vector<T> col;
  for (std::size_t n = 0; n < input.n(); ++n) {
    T* o = out.sample(n).data();
    for (std::size_t oc = 0; oc < O; ++oc) std::fill(o + oc * out_plane, o + (oc + 1) * out_plane, p.bias[oc]);
    const T* in = input.sample(n).data();
    if (is_pointwise<T>(g)) {
      gemm_nn(O, out_plane, K, W, K, in, out_plane, o, out_plane);
      continue;
    }
    for (std::size_t y0 = 0; y0 < g.out_h; y0 += chunk) {
      const std::size_t y1 = std::min(g.out_h, y0 + chunk);
      const std::size_t ncols = (y1 - y0) * g.out_w;
      col.resize(K * ncols);
      im2col(in, g, y0, y1, col.data());
      gemm_nn(O, ncols, K, W, K, col.data(), ncols, o + y0 * g.out_w, out_plane);
    }
  }
  return out;
}

template <class T>
ConvGradients<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input, const ConvParams<T>& p) {
  const ConvGeometry g = check_conv("conv2d_backward", input, p);
  const std::size_t O = p.out_channels();
  require_same_shape("conv2d_backward", Shape{input.n(), O, g.out_h, g.out_w}, grad_out.shape());
  const std::size_t K = g.channels * g.kernel * g.kernel;
  const std::size_t out_plane = g.out_h * g.out_w;

  ConvGradients<T> grads{Tensor<T>(input.shape()), Tensor<T>(p.weights.shape()), std::vector<T>(O, T{0})};
  std::vector<T> wt(K * O);
  transpose(O, K, p.weights.data().data(), K, wt.data());
  T* gw = grads.weights.data().data();

  const std::size_t chunk = rows_per_chunk(g);
  std::vector<T> col, colt, gcol;
  for (std::size_t n = 0; n < input.n(); ++n) {
    const T* go = grad_out.sample(n).data();
    const T* in = input.sample(n).data();
    T* gi = grads.input.sample(n).data();
    for (std::size_t oc = 0; oc < O; ++oc) {
      T s{0};
      for (std::size_t i = 0; i < out_plane; ++i) s += go[oc * out_plane + i];
      grads.bias[oc] += s;
    }
    for (std::size_t y0 = 0; y0 < g.out_h; y0 += chunk) {
      const std::size_t y1 = std::min(g.out_h, y0 + chunk);
      const std::size_t ncols = (y1 - y0) * g.out_w;
      const T* go_chunk = go + y0 * g.out_w;
      const T* colp;
      if (is_pointwise<T>(g)) {
        colp = in;  // K == channels, rows of the sample are already the columns
        colt.resize(ncols * K);
        transpose(K, ncols, in + y0 * g.out_w, out_plane, colt.data());
      } else {
        col.resize(K * ncols);
        im2col(in, g, y0, y1, col.data());
        colp = col.data();
        colt.resize(ncols * K);
        transpose(K, ncols, colp, ncols, colt.data());
      }
      gemm_nn(O, K, ncols, go_chunk, out_plane, colt.data(), K, gw, K);
      if (is_pointwise<T>(g)) {
        gemm_nn(K, ncols, O, wt.data(), O, go_chunk, out_plane, gi + y0 * g.out_w, out_plane);
      } else {
        gcol.assign(K * ncols, T{0});
        gemm_nn(K, ncols, O, wt.data(), O, go_chunk, out_plane, gcol.data(), ncols);
        col2im(gcol.data(), g, y0, y1, gi);
      }
    }
  }
  return grads;
}

template <class T>
Tensor<T> conv2d_forward_reference(const Tensor<T>& input, const ConvParams<T>& p) {
  const ConvGeometry g = check_conv("conv2d_forward", input, p);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(g.width);
  Tensor<T> out(input.n(), p.out_channels(), g.out_h, g.out_w);
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t o = 0; o < p.out_channels(); ++o) {
      for (std::size_t y = 0; y < g.out_h; ++y) {
        for (std::size_t x = 0; x < g.out_w; ++x) {
          T acc{0};
          for (std::size_t c = 0; c < g.channels; ++c) {
            for (std::size_t u = 0; u < g.kernel; ++u) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + u) - g.pad;
              if (iy < 0 || iy >= H) continue;
              for (std::size_t v = 0; v < g.kernel; ++v) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + v) - g.pad;
                if (ix < 0 || ix >= W) continue;
                acc += p.weights(o, c, u, v) * input(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
            }
          }
          out(n, o, y, x) = acc + p.bias[o];
        }
      }
    }
  }
  return out;
}

template <class T>
ConvGradients<T> conv2d_backward_reference(const Tensor<T>& grad_out, const Tensor<T>& input,
                                           const ConvParams<T>& p) {
  const ConvGeometry g = check_conv("conv2d_backward", input, p);
  require_same_shape("conv2d_backward", Shape{input.n(), p.out_channels(), g.out_h, g.out_w}, grad_out.shape());
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(g.width);
  ConvGradients<T> grads{Tensor<T>(input.shape()), Tensor<T>(p.weights.shape()),
                         std::vector<T>(p.out_channels(), T{0})};
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t o = 0; o < p.out_channels(); ++o) {
      for (std::size_t y = 0; y < g.out_h; ++y) {
        for (std::size_t x = 0; x < g.out_w; ++x) {
          const T go = grad_out(n, o, y, x);
          grads.bias[o] += go;
          for (std::size_t c = 0; c < g.channels; ++c) {
            for (std::size_t u = 0; u < g.kernel; ++u) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + u) - g.pad;
              if (iy < 0 || iy >= H) continue;
              for (std::size_t v = 0; v < g.kernel; ++v) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + v) - g.pad;
                if (ix < 0 || ix >= W) continue;
                const auto sy = static_cast<std::size_t>(iy);
                const auto sx = static_cast<std::size_t>(ix);
                grads.weights(o, c, u, v) += go * input(n, c, sy, sx);
                grads.input(n, c, sy, sx) += go * p.weights(o, c, u, v);
              }
            }
          }
        }
      }
    }
  }
  return grads;
}

template <class T>
Tensor<T> depthwise_conv2d_forward(const Tensor<T>& input, const DepthwiseConvParams<T>& p) {
  const ConvGeometry g = check_depthwise("depthwise_conv2d_forward", input, p);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(g.width);
  Tensor<T> out(input.n(), g.channels, g.out_h, g.out_w);
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t c = 0; c < g.channels; ++c) {
      for (std::size_t y = 0; y < g.out_h; ++y) {
        for (std::size_t x = 0; x < g.out_w; ++x) {
          T acc{0};
          for (std::size_t u = 0; u < g.kernel; ++u) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + u) - g.pad;
            if (iy < 0 || iy >= H) continue;
            for (std::size_t v = 0; v < g.kernel; ++v) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + v) - g.pad;
              if (ix < 0 || ix >= W) continue;
              acc += p.weights(c, 0, u, v) * input(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            }
          }
          out(n, c, y, x) = acc + p.bias[c];
        }
      }
    }
  }
  return out;
}

template <class T>
ConvGradients<T> depthwise_conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                                           const DepthwiseConvParams<T>& p) {
  const ConvGeometry g = check_depthwise("depthwise_conv2d_backward", input, p);
  require_same_shape("depthwise_conv2d_backward", Shape{input.n(), g.channels, g.out_h, g.out_w},
                     grad_out.shape());
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(g.width);
  ConvGradients<T> grads{Tensor<T>(input.shape()), Tensor<T>(p.weights.shape()),
                         std::vector<T>(g.channels, T{0})};
  for (std::size_t n = 0; n < input.n(); ++n) {
    for (std::size_t c = 0; c < g.channels; ++c) {
      for (std::size_t y = 0; y < g.out_h; ++y) {
        for (std::size_t x = 0; x < g.out_w; ++x) {
          const T go = grad_out(n, c, y, x);
          grads.bias[c] += go;
          for (std::size_t u = 0; u < g.kernel; ++u) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + u) - g.pad;
            if (iy < 0 || iy >= H) continue;
            for (std::size_t v = 0; v < g.kernel; ++v) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + v) - g.pad;
              if (ix < 0 || ix >= W) continue;
              const auto sy = static_cast<std::size_t>(iy);
              const auto sx = static_cast<std::size_t>(ix);
              grads.weights(c, 0, u, v) += go * input(n, c, sy, sx);
              grads.input(n, c, sy, sx) += go * p.weights(c, 0, u, v);
            }
          }
        }
      }
    }
  }
  return grads;
}

template <class T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
  return out;
}

template <class T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input) {
  require_same_shape("relu_backward", input.shape(), grad_out.shape());
  Tensor<T> out(input.shape());
  auto x = input.data();
  auto g = grad_out.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = x[i] > T{0} ? g[i] : T{0};
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = a;
  add_inplace(out, b);
  return out;
}

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  auto dst = a.data();
  auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

#define DNRES_INSTANTIATE_KERNELS(T)                                                                    \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const ConvParams<T>&);                             \
  template ConvGradients<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const ConvParams<T>&);   \
  template Tensor<T> conv2d_forward_reference(const Tensor<T>&, const ConvParams<T>&);                   \
  template ConvGradients<T> conv2d_backward_reference(const Tensor<T>&, const Tensor<T>&,                \
                                                      const ConvParams<T>&);                             \
  template Tensor<T> depthwise_conv2d_forward(const Tensor<T>&, const DepthwiseConvParams<T>&);          \
  template ConvGradients<T> depthwise_conv2d_backward(const Tensor<T>&, const Tensor<T>&,                \
                                                      const DepthwiseConvParams<T>&);                    \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                     \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                            \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);

DNRES_INSTANTIATE_KERNELS(float)
DNRES_INSTANTIATE_KERNELS(double)

#undef DNRES_INSTANTIATE_KERNELS

}  // namespace dnres
