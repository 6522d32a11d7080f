#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ciscnet/train.hpp"

using namespace ciscnet;

namespace {

std::vector<LabeledPatch> patches_with_empties() {
  SyntheticConfig cfg;
  cfg.seed = 4;
  cfg.n_patches = 8;
  cfg.height = 32;
  cfg.width = 32;
  cfg.density = 0.2;
  std::vector<LabeledPatch> patches = generate_synthetic(cfg);
  patches.push_back(LabeledPatch(32, 32));  // two empty patches
  patches.push_back(LabeledPatch(32, 32));
  return patches;
}

}  // namespace

TEST_CASE("split arithmetic: 10 patches, 2 empty, ratio 0.8 -> 7 train 1 val") {
  std::vector<LabeledPatch> patches = patches_with_empties();
  REQUIRE(patches.size() == 10);
  SplitResult split = filter_and_split(patches, 0.8, 1);
  CHECK(split.train.size() == 7);  // ceil(0.8 * 8)
  CHECK(split.val.size() == 1);
}

TEST_CASE("all-empty input reports EmptyAfterFilter") {
  std::vector<LabeledPatch> patches(3, LabeledPatch(32, 32));
  CHECK_THROWS_AS(filter_and_split(patches, 0.8, 1), EmptyAfterFilter);
}

TEST_CASE("split is deterministic and drops only empty patches") {
  std::vector<LabeledPatch> patches = patches_with_empties();
  SplitResult a = filter_and_split(patches, 0.8, 99);
  SplitResult b = filter_and_split(patches, 0.8, 99);
  REQUIRE(a.train.size() == b.train.size());
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].instances == b.train[i].instances);
  }
  for (const auto& p : a.train) {
    bool any = false;
    for (uint16_t l : p.instances) any |= l != 0;
    CHECK(any);
  }
}

TEST_CASE("image normalization endpoints") {
  LabeledPatch p(32, 32);
  p.image[0] = 0;
  p.image[1] = 255;
  p.image[2] = 128;
  std::vector<float> norm = normalize_image(p);
  CHECK(norm[0] == -1.0f);
  CHECK(norm[1] == 1.0f);
  CHECK(norm[2] == doctest::Approx(0.00392156862745098).epsilon(1e-7));
}

TEST_CASE("default loss weights: present classes average to one") {
  SyntheticConfig cfg;
  cfg.seed = 12;
  cfg.n_patches = 6;
  cfg.height = 64;
  cfg.width = 64;
  cfg.density = 0.25;
  std::vector<LabeledPatch> patches = generate_synthetic(cfg);
  std::array<double, 7> omega = default_loss_weights(patches, 1.0);
  CHECK(omega[0] == 1.0);

  std::array<int64_t, 6> px{};
  for (const auto& p : patches)
    for (uint8_t c : p.classes)
      if (c) px[c - 1]++;
  double sum = 0;
  int present = 0;
  for (int c = 0; c < 6; ++c) {
    CHECK(omega[c + 1] > 0);
    if (px[c] > 0) {
      sum += omega[c + 1];
      ++present;
    } else {
      CHECK(omega[c + 1] == 1.0);
    }
  }
  CHECK(sum / present == doctest::Approx(1.0).epsilon(1e-12));
  // rarer classes weigh more
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b)
      if (px[a] > 0 && px[b] > 0 && px[a] < px[b]) CHECK(omega[a + 1] > omega[b + 1]);
}

TEST_CASE("one training step on one sample leaves finite state") {
  SyntheticConfig scfg;
  scfg.seed = 3;
  scfg.n_patches = 1;
  scfg.height = 32;
  scfg.width = 32;
  scfg.density = 0.3;
  SplitResult split;
  split.train = generate_synthetic(scfg);

  NetworkConfig net;
  net.depth = 1;
  net.base_features = 4;
  net.feature_cap = 8;
  net.groups = 2;
  TrainConfig cfg;
  cfg.total_steps = 1;
  cfg.warmup_steps = 0;
  cfg.batch_size = 1;
  cfg.augment_enabled = false;

  TrainResult res = train_loop(split, net, cfg);
  REQUIRE(res.log.size() == 1);
  CHECK(std::isfinite(res.log[0].train_loss));
  CHECK(std::isfinite(res.log[0].val_loss));
  CHECK(res.best_params.tensors.size() == res.final_params.tensors.size());
}

TEST_CASE("training with a fixed seed is bit-reproducible") {
  SyntheticConfig scfg;
  scfg.seed = 21;
  scfg.n_patches = 3;
  scfg.height = 32;
  scfg.width = 32;
  scfg.density = 0.25;
  SplitResult split;
  split.train = generate_synthetic(scfg);

  NetworkConfig net;
  net.depth = 1;
  net.base_features = 4;
  net.feature_cap = 8;
  net.groups = 2;
  TrainConfig cfg;
  cfg.total_steps = 6;
  cfg.warmup_steps = 2;
  cfg.batch_size = 2;
  cfg.seed = 5;
  cfg.augment.p_color = 1.0;  // exercise the augmentation path too
  cfg.augment.p_noise = 1.0;

  TrainResult a = train_loop(split, net, cfg);
  TrainResult b = train_loop(split, net, cfg);
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_loss == b.log[i].val_loss);
  }
  for (size_t i = 0; i < a.final_params.tensors.size(); ++i) {
    CHECK(a.final_params.tensors[i].data == b.final_params.tensors[i].data);
  }
}

TEST_CASE("short overfit run cuts the training loss") {
  SyntheticConfig scfg;
  scfg.seed = 8;
  scfg.n_patches = 2;
  scfg.height = 32;
  scfg.width = 32;
  scfg.density = 0.3;
  SplitResult split;
  split.train = generate_synthetic(scfg);
  split.val = split.train;

  NetworkConfig net;
  net.depth = 2;
  net.base_features = 8;
  net.feature_cap = 32;
  net.groups = 4;
  net.seed = 2;
  TrainConfig cfg;
  cfg.total_steps = 120;
  cfg.warmup_steps = 10;
  cfg.batch_size = 2;
  cfg.augment_enabled = false;
  cfg.optimizer.lr = 2e-3;

  TrainResult res = train_loop(split, net, cfg);
  CHECK(res.final_train_loss < 0.5 * res.initial_train_loss);
  CHECK(res.best_val_loss <= res.log.front().val_loss);
}

TEST_CASE("config validation") {
  TrainConfig cfg;
  cfg.split_ratio = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  cfg = TrainConfig{};
  cfg.w_fg = 0.5;
  CHECK_THROWS_AS(cfg.validate(), InvalidWeights);
  cfg = TrainConfig{};
  cfg.total_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
  CHECK_THROWS_AS(filter_and_split({LabeledPatch(32, 32)}, 1.5, 0), InvalidConfig);
}
