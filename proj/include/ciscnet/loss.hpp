#pragma once

#include <array>

#include "ciscnet/tensor.hpp"

namespace ciscnet {

// Quadratic below beta, linear above, C1 at the junction.
template <typename T>
T smooth_l1_value(T diff, T beta);

template <typename T>
T smooth_l1_grad(T diff, T beta);

template <typename T>
Tensor4<T> smooth_l1_map(const Tensor4<T>& pred, const Tensor4<T>& target, T beta);

template <typename T>
struct LossResult {
  T value = T(0);
  Tensor4<T> grad;  // d value / d pred
};

// L = sum_i omega_i * L_i where L_1..L_6 are weighted means of per-channel
// smooth L1 and L_0 is the weighted mean over the channel-sum map.
// weight is N x 1 x H x W; the mean normalizes by the weight total.
template <typename T>
LossResult<T> total_loss(const Tensor4<T>& pred, const Tensor4<T>& target,
                         const Tensor4<T>& weight, const std::array<T, 7>& omega, T beta);

}  // namespace ciscnet
