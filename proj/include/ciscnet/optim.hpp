#pragma once

#include "ciscnet/unet.hpp"

namespace ciscnet {

struct OptimizerConfig {
  double lr = 6e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int lookahead_k = 6;
  double lookahead_alpha = 0.5;
};

struct ScheduleConfig {
  int warmup_steps = 0;
  int total_steps = 1;
};

// Linear warmup to base_lr, then cosine annealing to 0 at total_steps.
double lr_at(int step, double base_lr, const ScheduleConfig& schedule);

// RAdam fast weights wrapped with Lookahead slow weights.
template <typename T>
class RangerOptimizer {
 public:
  RangerOptimizer(OptimizerConfig cfg, const ParamSet<T>& params)
      : cfg_(cfg), slow_(params), m_(zeros_like(params)), v_(zeros_like(params)) {
    if (cfg.lookahead_k < 1) throw InvalidConfig("lookahead_k must be >= 1");
    if (cfg.lookahead_alpha < 0 || cfg.lookahead_alpha > 1)
      throw InvalidConfig("lookahead_alpha must be in [0,1]");
  }

  // One update of the fast weights; every lookahead_k steps the slow weights
  // interpolate toward the fast ones and the fast weights snap back.
  void step(ParamSet<T>& fast, const ParamSet<T>& grads, double lr);

  int step_count() const { return step_; }

 private:
  OptimizerConfig cfg_;
  ParamSet<T> slow_, m_, v_;
  int step_ = 0;
};

}  // namespace ciscnet
