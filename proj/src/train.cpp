#include "ciscnet/train.hpp"

#include <algorithm>
#include <cmath>

#include "ciscnet/loss.hpp"

namespace ciscnet {

void TrainConfig::validate() const {
  if (split_ratio <= 0.0 || split_ratio >= 1.0) throw InvalidConfig("split_ratio must be in (0,1)");
  double wsum = 0;
  for (double w : loss_weights) {
    if (w < 0) throw InvalidWeights("loss weight < 0");
    wsum += w;
  }
  if (wsum <= 0) throw InvalidWeights("loss weights all zero");
  if (smooth_l1_beta <= 0) throw InvalidConfig("smooth_l1_beta must be > 0");
  if (w_bg < 1.0 || w_fg < w_bg) throw InvalidWeights("need w_fg >= w_bg >= 1");
  if (total_steps < 1) throw InvalidConfig("total_steps must be >= 1");
  if (warmup_steps > total_steps) throw InvalidConfig("warmup_steps > total_steps");
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
}

SplitResult filter_and_split(const std::vector<LabeledPatch>& patches, double ratio,
                             uint64_t seed) {
  if (ratio <= 0.0 || ratio >= 1.0) throw InvalidConfig("split ratio must be in (0,1)");
  std::vector<int> kept;
  for (size_t i = 0; i < patches.size(); ++i) {
    bool has_nuclei = false;
    for (uint16_t lbl : patches[i].instances) {
      if (lbl != 0) {
        has_nuclei = true;
        break;
      }
    }
    if (has_nuclei) kept.push_back(static_cast<int>(i));
  }
  if (kept.empty()) throw EmptyAfterFilter();

  Rng rng(seed, 0x51717ULL);
  for (size_t i = kept.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(kept[i - 1], kept[j]);
  }

  size_t n_train = static_cast<size_t>(std::ceil(ratio * kept.size()));
  n_train = std::min(n_train, kept.size());
  SplitResult out;
  for (size_t i = 0; i < kept.size(); ++i) {
    (i < n_train ? out.train : out.val).push_back(patches[kept[i]]);
  }
  return out;
}

std::vector<float> normalize_image(const LabeledPatch& patch) {
  std::vector<float> out(patch.image.size());
  for (size_t i = 0; i < patch.image.size(); ++i) {
    out[i] = static_cast<float>(patch.image[i] / 127.5 - 1.0);
  }
  return out;
}

Tensor4f image_to_tensor(const LabeledPatch& patch) {
  Tensor4f t(1, 3, patch.height, patch.width);
  for (int y = 0; y < patch.height; ++y) {
    for (int x = 0; x < patch.width; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        t.at(0, ch, y, x) = static_cast<float>(patch.rgb(y, x, ch) / 127.5 - 1.0);
      }
    }
  }
  return t;
}

std::array<double, 7> default_loss_weights(const std::vector<LabeledPatch>& train_patches,
                                           double omega0) {
  std::array<int64_t, kNumClasses> px{};
  for (const LabeledPatch& p : train_patches) {
    for (uint8_t c : p.classes) {
      if (c > 0) px[c - 1]++;
    }
  }
  std::array<double, 7> omega{};
  omega[0] = omega0;
  double inv_sum = 0;
  int present = 0;
  std::array<double, kNumClasses> inv{};
  for (int c = 0; c < kNumClasses; ++c) {
    if (px[c] > 0) {
      inv[c] = 1.0 / static_cast<double>(px[c]);
      inv_sum += inv[c];
      ++present;
    }
  }
  for (int c = 0; c < kNumClasses; ++c) {
    // absent classes keep a neutral weight so their channels still regress to 0
    omega[c + 1] = px[c] > 0 ? inv[c] * present / inv_sum : 1.0;
  }
  return omega;
}

EncodedSample encode_sample(const LabeledPatch& patch, double w_bg, double w_fg) {
  DistanceTarget dt = encode_distance_maps(patch);
  WeightMap wm = compute_weight_map(patch, w_bg, w_fg);
  EncodedSample s;
  s.target = Tensor4f(1, kNumClasses, patch.height, patch.width);
  s.weight = Tensor4f(1, 1, patch.height, patch.width);
  size_t plane = patch.npx();
  for (int c = 0; c < kNumClasses; ++c) {
    float* dst = s.target.plane(0, c);
    for (size_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(dt.channels[c][i]);
  }
  float* wdst = s.weight.plane(0, 0);
  for (size_t i = 0; i < plane; ++i) wdst[i] = static_cast<float>(wm.weights[i]);
  return s;
}

namespace {

Tensor4f stack_batch(const std::vector<const Tensor4f*>& parts) {
  const Tensor4f& first = *parts[0];
  Tensor4f out(static_cast<int>(parts.size()), first.c, first.h, first.w);
  size_t one = first.size();
  for (size_t i = 0; i < parts.size(); ++i) {
    std::copy_n(parts[i]->data.data(), one, out.data.data() + i * one);
  }
  return out;
}

struct BatchTensors {
  Tensor4f input, target, weight;
};

BatchTensors make_batch(const std::vector<LabeledPatch>& patches,
                        const std::vector<EncodedSample>& encoded, const std::vector<int>& idx) {
  std::vector<Tensor4f> inputs;
  inputs.reserve(idx.size());
  for (int i : idx) inputs.push_back(image_to_tensor(patches[i]));
  std::vector<const Tensor4f*> in_ptr, tgt_ptr, w_ptr;
  for (size_t k = 0; k < idx.size(); ++k) {
    in_ptr.push_back(&inputs[k]);
    tgt_ptr.push_back(&encoded[idx[k]].target);
    w_ptr.push_back(&encoded[idx[k]].weight);
  }
  return {stack_batch(in_ptr), stack_batch(tgt_ptr), stack_batch(w_ptr)};
}

}  // namespace

TrainResult train_loop(const SplitResult& split, const NetworkConfig& net_cfg,
                       const TrainConfig& cfg) {
  cfg.validate();
  net_cfg.validate();
  if (split.train.empty()) throw EmptyAfterFilter();

  const bool use_aug = cfg.augment_enabled && cfg.augment.any_enabled();
  const bool geometric = use_aug && cfg.augment.any_geometric();

  std::array<double, 7> omega = cfg.loss_weights;
  if (cfg.auto_class_weights) {
    auto computed = default_loss_weights(split.train, cfg.loss_weights[0]);
    omega = computed;
  }
  std::array<float, 7> omega_f;
  for (int i = 0; i < 7; ++i) omega_f[i] = static_cast<float>(omega[i]);
  const float beta = static_cast<float>(cfg.smooth_l1_beta);

  // Targets may be cached only while the geometry is fixed.
  std::vector<EncodedSample> train_encoded, val_encoded;
  if (!geometric) {
    for (const auto& p : split.train) train_encoded.push_back(encode_sample(p, cfg.w_bg, cfg.w_fg));
  }
  for (const auto& p : split.val) val_encoded.push_back(encode_sample(p, cfg.w_bg, cfg.w_fg));

  ParamSet<float> params = unet_init_params<float>(net_cfg);
  RangerOptimizer<float> opt(cfg.optimizer, params);
  ScheduleConfig schedule = cfg.schedule();

  TrainResult res;
  res.best_val_loss = std::numeric_limits<double>::infinity();

  const int n_train = static_cast<int>(split.train.size());
  int step = 0, epoch = 0;
  while (step < cfg.total_steps) {
    // deterministic epoch order
    std::vector<int> order(n_train);
    for (int i = 0; i < n_train; ++i) order[i] = i;
    Rng shuffle_rng(cfg.seed, 0xe90c0000ULL + static_cast<uint64_t>(epoch));
    for (int i = n_train; i > 1; --i) {
      int j = shuffle_rng.uniform_int(0, i - 1);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0;
    int epoch_batches = 0;
    for (int start = 0; start < n_train && step < cfg.total_steps; start += cfg.batch_size) {
      int end = std::min(start + cfg.batch_size, n_train);
      std::vector<int> idx(order.begin() + start, order.begin() + end);

      BatchTensors batch;
      if (use_aug) {
        std::vector<LabeledPatch> aug_patches;
        std::vector<EncodedSample> aug_encoded;
        std::vector<int> local;
        for (size_t k = 0; k < idx.size(); ++k) {
          // per-sample stream derived from (seed, epoch, sample index)
          Rng srng(cfg.seed, 0xa0900000ULL + static_cast<uint64_t>(epoch) * 1000003ULL +
                                 static_cast<uint64_t>(idx[k]));
          aug_patches.push_back(augment(split.train[idx[k]], cfg.augment, srng));
          aug_encoded.push_back(geometric
                                    ? encode_sample(aug_patches.back(), cfg.w_bg, cfg.w_fg)
                                    : train_encoded[idx[k]]);
          local.push_back(static_cast<int>(k));
        }
        batch = make_batch(aug_patches, aug_encoded, local);
      } else {
        batch = make_batch(split.train, train_encoded, idx);
      }

      UnetCache<float> cache;
      Tensor4f pred = unet_forward(net_cfg, params, batch.input, &cache);
      LossResult<float> loss = total_loss(pred, batch.target, batch.weight, omega_f, beta);
      ParamSet<float> grads = unet_backward(net_cfg, params, cache, loss.grad);

      double lr = lr_at(step, cfg.optimizer.lr, schedule);
      opt.step(params, grads, lr);
      ++step;

      epoch_loss += loss.value;
      ++epoch_batches;
    }
    epoch_loss /= std::max(1, epoch_batches);

    // validation loss with the current weights
    bool last_epoch = step >= cfg.total_steps;
    bool validate = epoch % std::max(1, cfg.val_interval) == 0 || last_epoch;
    double val_loss;
    if (validate && !split.val.empty()) {
      val_loss = 0;
      for (size_t i = 0; i < split.val.size(); ++i) {
        Tensor4f input = image_to_tensor(split.val[i]);
        Tensor4f pred = unet_forward(net_cfg, params, input);
        LossResult<float> l =
            total_loss(pred, val_encoded[i].target, val_encoded[i].weight, omega_f, beta);
        val_loss += l.value;
      }
      val_loss /= static_cast<double>(split.val.size());
    } else if (validate) {
      val_loss = epoch_loss;
    } else {
      val_loss = res.log.empty() ? epoch_loss : res.log.back().val_loss;
    }

    res.log.push_back({step, lr_at(std::min(step, cfg.total_steps), cfg.optimizer.lr, schedule),
                       epoch_loss, val_loss});
    if (epoch == 0) res.initial_train_loss = epoch_loss;
    res.final_train_loss = epoch_loss;
    if (validate && val_loss < res.best_val_loss) {
      res.best_val_loss = val_loss;
      res.best_params = params;
      res.best_step = step;
    }
    ++epoch;
  }

  res.final_params = params;
  if (res.best_params.tensors.empty()) res.best_params = params;
  return res;
}

}  // namespace ciscnet
