#pragma once

#include <vector>

#include "ciscnet/tensor.hpp"

namespace ciscnet {

// Worker threads for the convolution kernels. Work is split by output plane
// (or filter), so results are bitwise identical for every thread count.
void set_layer_threads(int n);
int layer_threads();

// All convolutions use cross-correlation semantics.
// conv2d weights: [out_ch, in_ch, k, k]; bias length out_ch (may be empty).
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const Tensor4<T>& weights, const std::vector<T>& bias,
                  int stride, int pad);

template <typename T>
struct ConvGrads {
  Tensor4<T> dx;
  Tensor4<T> dw;
  std::vector<T> db;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& x, const Tensor4<T>& weights,
                             const Tensor4<T>& upstream, int stride, int pad,
                             bool need_dx = true);

// Transposed convolution, the adjoint of conv2d with pad 0 and the same
// weight tensor. weights: [in_ch, out_ch, k, k]; output is (H-1)*s+k squared.
template <typename T>
Tensor4<T> conv_transpose2d(const Tensor4<T>& x, const Tensor4<T>& weights,
                            const std::vector<T>& bias, int stride);

template <typename T>
ConvGrads<T> conv_transpose2d_backward(const Tensor4<T>& x, const Tensor4<T>& weights,
                                       const Tensor4<T>& upstream, int stride,
                                       bool need_dx = true);

// Group normalization with biased variance over (channels-in-group, H, W).
template <typename T>
struct GroupNormCtx {
  Tensor4<T> xhat;            // normalized pre-affine activations
  std::vector<T> inv_std;     // per (n, group)
  int groups = 0;
};

template <typename T>
Tensor4<T> group_norm(const Tensor4<T>& x, const std::vector<T>& gamma,
                      const std::vector<T>& beta, int groups, T eps,
                      GroupNormCtx<T>* ctx = nullptr);

template <typename T>
struct GroupNormGrads {
  Tensor4<T> dx;
  std::vector<T> dgamma, dbeta;
};

template <typename T>
GroupNormGrads<T> group_norm_backward(const GroupNormCtx<T>& ctx, const std::vector<T>& gamma,
                                      const Tensor4<T>& upstream);

// y = x * tanh(softplus(x)), stabilized for large |x|.
template <typename T>
Tensor4<T> mish(const Tensor4<T>& x);

template <typename T>
Tensor4<T> mish_backward(const Tensor4<T>& x, const Tensor4<T>& upstream);

template <typename T>
T mish_scalar(T x);

// N x C x H x W -> N x 1 x H x W elementwise channel sum.
template <typename T>
Tensor4<T> sum_channels(const Tensor4<T>& x);

template <typename T>
Tensor4<T> sum_channels_backward(const Tensor4<T>& upstream, int channels);

// Channel concatenation [a | b] and its backward split.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);

template <typename T>
void split_channels(const Tensor4<T>& joined, int c_a, Tensor4<T>& da, Tensor4<T>& db);

}  // namespace ciscnet
