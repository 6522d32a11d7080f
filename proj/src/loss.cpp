#include "ciscnet/loss.hpp"

#include <cmath>

namespace ciscnet {

template <typename T>
T smooth_l1_value(T diff, T beta) {
  T a = std::abs(diff);
  if (a < beta) return T(0.5) * diff * diff / beta;
  return a - T(0.5) * beta;
}

template <typename T>
T smooth_l1_grad(T diff, T beta) {
  if (std::abs(diff) < beta) return diff / beta;
  return diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
}

template <typename T>
Tensor4<T> smooth_l1_map(const Tensor4<T>& pred, const Tensor4<T>& target, T beta) {
  if (beta <= T(0)) throw InvalidConfig("smooth_l1 beta must be > 0");
  if (!pred.same_shape(target)) throw ShapeMismatch("smooth_l1_map");
  Tensor4<T> out(pred.n, pred.c, pred.h, pred.w);
  for (size_t i = 0; i < pred.data.size(); ++i)
    out.data[i] = smooth_l1_value(pred.data[i] - target.data[i], beta);
  return out;
}

template <typename T>
LossResult<T> total_loss(const Tensor4<T>& pred, const Tensor4<T>& target,
                         const Tensor4<T>& weight, const std::array<T, 7>& omega, T beta) {
  if (beta <= T(0)) throw InvalidConfig("smooth_l1 beta must be > 0");
  if (!pred.same_shape(target)) throw ShapeMismatch("total_loss pred/target");
  weight.require_shape(pred.n, 1, pred.h, pred.w, "total_loss weight");

  const int channels = pred.c;
  const size_t plane = static_cast<size_t>(pred.h) * pred.w;

  T weight_total = T(0);
  for (T w : weight.data) weight_total += w;
  if (weight_total <= T(0)) throw InvalidWeights("weight map sums to zero");

  LossResult<T> res;
  res.grad = Tensor4<T>(pred.n, pred.c, pred.h, pred.w);

  T channel_loss = T(0);  // sum over i>=1 of omega_i * raw weighted sum
  T sum_loss = T(0);
  for (int n = 0; n < pred.n; ++n) {
    const T* wrow = weight.plane(n, 0);
    for (size_t i = 0; i < plane; ++i) {
      T w = wrow[i];
      T dsum = T(0);
      for (int c = 0; c < channels; ++c) {
        T d = pred.plane(n, c)[i] - target.plane(n, c)[i];
        dsum += d;
        channel_loss += omega[c + 1] * w * smooth_l1_value(d, beta);
        res.grad.plane(n, c)[i] = omega[c + 1] * w * smooth_l1_grad(d, beta);
      }
      // the channel sum of pred - the channel sum of target
      sum_loss += omega[0] * w * smooth_l1_value(dsum, beta);
      T g0 = omega[0] * w * smooth_l1_grad(dsum, beta);
      if (g0 != T(0)) {
        for (int c = 0; c < channels; ++c) res.grad.plane(n, c)[i] += g0;
      }
    }
  }
  res.value = (channel_loss + sum_loss) / weight_total;
  for (auto& g : res.grad.data) g /= weight_total;
  return res;
}

#define CISCNET_INSTANTIATE(T)                                                      \
  template T smooth_l1_value<T>(T, T);                                              \
  template T smooth_l1_grad<T>(T, T);                                               \
  template Tensor4<T> smooth_l1_map<T>(const Tensor4<T>&, const Tensor4<T>&, T);    \
  template LossResult<T> total_loss<T>(const Tensor4<T>&, const Tensor4<T>&,        \
                                       const Tensor4<T>&, const std::array<T, 7>&, T);

CISCNET_INSTANTIATE(float)
CISCNET_INSTANTIATE(double)

#undef CISCNET_INSTANTIATE

}  // namespace ciscnet
