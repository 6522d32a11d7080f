#pragma once

#include <array>
#include <vector>

#include "ciscnet/augment.hpp"
#include "ciscnet/data.hpp"
#include "ciscnet/encode.hpp"
#include "ciscnet/optim.hpp"
#include "ciscnet/unet.hpp"

namespace ciscnet {

struct TrainConfig {
  double split_ratio = 0.8;
  // loss_weights[0] is the channel-sum term; 1..6 are the class channels.
  // With auto_class_weights the class entries are recomputed from the
  // training split (inverse pixel frequency, normalized to mean 1).
  std::array<double, 7> loss_weights{1, 1, 1, 1, 1, 1, 1};
  bool auto_class_weights = true;
  double smooth_l1_beta = 1.0;
  double w_bg = 1.0, w_fg = 10.0;
  OptimizerConfig optimizer;
  int warmup_steps = -1;  // -1: 5% of total_steps
  int total_steps = 2000;
  int batch_size = 2;
  int val_interval = 1;  // validate every n-th epoch (rows in between carry the last value)
  AugmentConfig augment;
  bool augment_enabled = true;
  uint64_t seed = 42;

  void validate() const;
  ScheduleConfig schedule() const {
    int warmup = warmup_steps >= 0 ? warmup_steps : total_steps / 20;
    return {warmup, total_steps};
  }
};

struct SplitResult {
  std::vector<LabeledPatch> train, val;
};

// Drops patches without nuclei, shuffles with the seeded rng, then takes
// ceil(ratio * n) patches for training and the rest for validation.
SplitResult filter_and_split(const std::vector<LabeledPatch>& patches, double ratio,
                             uint64_t seed);

// [0,255] -> [-1,1] with exact endpoints, H*W*3 interleaved.
std::vector<float> normalize_image(const LabeledPatch& patch);

// Input tensor for the network: 1 x 3 x H x W normalized image.
Tensor4f image_to_tensor(const LabeledPatch& patch);

std::array<double, 7> default_loss_weights(const std::vector<LabeledPatch>& train_patches,
                                           double omega0 = 1.0);

// Regression target and weight map of one patch as network-shaped tensors.
struct EncodedSample {
  Tensor4f target;  // 1 x 6 x H x W
  Tensor4f weight;  // 1 x 1 x H x W
};
EncodedSample encode_sample(const LabeledPatch& patch, double w_bg, double w_fg);

struct TrainLogRow {
  int step = 0;
  double lr = 0, train_loss = 0, val_loss = 0;
};

struct TrainResult {
  std::vector<TrainLogRow> log;  // one row per epoch
  ParamSet<float> best_params, final_params;
  double initial_train_loss = 0, final_train_loss = 0;
  double best_val_loss = 0;
  int best_step = 0;
};

TrainResult train_loop(const SplitResult& split, const NetworkConfig& net_cfg,
                       const TrainConfig& cfg);

}  // namespace ciscnet
