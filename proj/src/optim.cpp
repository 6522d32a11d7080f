#include "ciscnet/optim.hpp"

#include <cmath>

namespace ciscnet {

double lr_at(int step, double base_lr, const ScheduleConfig& schedule) {
  if (schedule.total_steps < schedule.warmup_steps || schedule.warmup_steps < 0)
    throw InvalidConfig("need total_steps >= warmup_steps >= 0");
  if (step < 0 || step > schedule.total_steps) throw StepOutOfRange(std::to_string(step));
  if (step < schedule.warmup_steps)
    return base_lr * static_cast<double>(step) / schedule.warmup_steps;
  int span = schedule.total_steps - schedule.warmup_steps;
  if (span == 0) return step == schedule.total_steps ? 0.0 : base_lr;
  double t = static_cast<double>(step - schedule.warmup_steps) / span;
  return base_lr * 0.5 * (1.0 + std::cos(3.141592653589793 * t));
}

template <typename T>
void RangerOptimizer<T>::step(ParamSet<T>& fast, const ParamSet<T>& grads, double lr) {
  if (fast.tensors.size() != m_.tensors.size() || grads.tensors.size() != m_.tensors.size())
    throw ShapeMismatch("optimizer parameter collections");
  ++step_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double t = static_cast<double>(step_);
  const double b1t = std::pow(b1, t);
  const double b2t = std::pow(b2, t);
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  const double rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t);

  double rect = 0.0;
  const bool rectified = rho_t > 4.0;
  if (rectified) {
    rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                     ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
  }

  for (size_t p = 0; p < fast.tensors.size(); ++p) {
    auto& theta = fast.tensors[p].data;
    const auto& g = grads.tensors[p].data;
    auto& m = m_.tensors[p].data;
    auto& v = v_.tensors[p].data;
    if (theta.size() != g.size()) throw ShapeMismatch("optimizer gradient shape");
    for (size_t i = 0; i < theta.size(); ++i) {
      double gi = static_cast<double>(g[i]);
      double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      double m_hat = mi / (1.0 - b1t);
      double update;
      if (rectified) {
        double v_hat = std::sqrt(vi / (1.0 - b2t));
        update = lr * rect * m_hat / (v_hat + cfg_.eps);
      } else {
        update = lr * m_hat;
      }
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - update);
    }
  }

  if (step_ % cfg_.lookahead_k == 0) {
    const double alpha = cfg_.lookahead_alpha;
    for (size_t p = 0; p < fast.tensors.size(); ++p) {
      auto& theta = fast.tensors[p].data;
      auto& slow = slow_.tensors[p].data;
      for (size_t i = 0; i < theta.size(); ++i) {
        double s = static_cast<double>(slow[i]) +
                   alpha * (static_cast<double>(theta[i]) - static_cast<double>(slow[i]));
        slow[i] = static_cast<T>(s);
        theta[i] = slow[i];
      }
    }
  }
}

template class RangerOptimizer<float>;
template class RangerOptimizer<double>;

}  // namespace ciscnet
