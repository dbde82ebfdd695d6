#pragma once

#include <cstddef>
#include <vector>

#include "dnres/tensor.hpp"

namespace dnres {

/// Standard convolution, stride 1, zero padding.
/// weights are (out_ch, in_ch, k, k); k must be odd.
template <class T>
struct ConvParams {
  Tensor<T> weights;
  std::vector<T> bias;
  int pad = 0;

  ConvParams() = default;
  ConvParams(std::size_t out_ch, std::size_t in_ch, std::size_t k, int pad_)
      : weights(out_ch, in_ch, k, k), bias(out_ch, T{0}), pad(pad_) {}

  std::size_t out_channels() const noexcept { return weights.n(); }
  std::size_t in_channels() const noexcept { return weights.c(); }
  std::size_t kernel() const noexcept { return weights.h(); }
};

/// One k x k filter per channel; weights are (ch, 1, k, k).
template <class T>
struct DepthwiseConvParams {
  Tensor<T> weights;
  std::vector<T> bias;
  int pad = 0;

  DepthwiseConvParams() = default;
  DepthwiseConvParams(std::size_t channels, std::size_t k, int pad_)
      : weights(channels, 1, k, k), bias(channels, T{0}), pad(pad_) {}

  std::size_t channels() const noexcept { return weights.n(); }
  std::size_t kernel() const noexcept { return weights.h(); }
};

template <class T>
struct ConvGradients {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;
};

/// Output spatial extent of a stride-1 convolution.
std::size_t conv_output_extent(std::size_t in, std::size_t k, int pad);

// Fast path: im2col + blocked matrix multiply, chunked over output rows so
// the column buffer stays bounded for full-resolution images.
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvParams<T>& p);
template <class T>
ConvGradients<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input, const ConvParams<T>& p);

// Direct nested loops. Slow; serves as the oracle for the fast path.
template <class T>
Tensor<T> conv2d_forward_reference(const Tensor<T>& input, const ConvParams<T>& p);
template <class T>
ConvGradients<T> conv2d_backward_reference(const Tensor<T>& grad_out, const Tensor<T>& input,
                                           const ConvParams<T>& p);

template <class T>
Tensor<T> depthwise_conv2d_forward(const Tensor<T>& input, const DepthwiseConvParams<T>& p);
template <class T>
ConvGradients<T> depthwise_conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                                           const DepthwiseConvParams<T>& p);

template <class T>
Tensor<T> relu_forward(const Tensor<T>& input);
template <class T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input);

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
/// a += b in place; shapes must match.
template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

}  // namespace dnres
