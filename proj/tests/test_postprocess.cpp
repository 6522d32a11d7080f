#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "ciscnet/encode.hpp"
#include "ciscnet/postprocess.hpp"
#include "ciscnet/rng.hpp"
#include "oracles.hpp"

using namespace ciscnet;

namespace {

Tensor4d target_to_tensor(const DistanceTarget& dt) {
  Tensor4d t(1, kNumClasses, dt.height, dt.width);
  for (int c = 0; c < kNumClasses; ++c) {
    std::copy(dt.channels[c].begin(), dt.channels[c].end(), t.plane(0, c));
  }
  return t;
}

}  // namespace

TEST_CASE("all-zero map decodes to no instances") {
  PostprocessConfig cfg;
  std::vector<double> map(64 * 64, 0.0);
  std::vector<int> labels = decode_watershed(map, 64, 64, cfg);
  for (int l : labels) CHECK(l == 0);
}

TEST_CASE("invalid thresholds are rejected") {
  PostprocessConfig cfg;
  cfg.mask_threshold = 0.6;  // >= seed threshold
  std::vector<double> map(16, 0.0);
  CHECK_THROWS_AS(decode_watershed(map, 4, 4, cfg), InvalidConfig);
}

TEST_CASE("single encoded 3x3 cell floods to exactly its nine pixels") {
  LabeledPatch p(16, 16);
  for (int y = 5; y <= 7; ++y)
    for (int x = 5; x <= 7; ++x) {
      p.inst(y, x) = 1;
      p.cls(y, x) = 1;
    }
  DistanceTarget dt = encode_distance_maps(p);
  PostprocessConfig cfg;
  cfg.seed_threshold = 0.6;
  cfg.mask_threshold = 0.1;
  cfg.min_cell_area = 1;
  std::vector<int> labels = decode_watershed(dt.sum, 16, 16, cfg);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      int expect = (y >= 5 && y <= 7 && x >= 5 && x <= 7) ? 1 : 0;
      CHECK(labels[static_cast<size_t>(y) * 16 + x] == expect);
    }
  }
}

TEST_CASE("two touching cells split along the valley") {
  LabeledPatch p(24, 24);
  for (int y = 10; y < 14; ++y) {
    for (int x = 8; x < 12; ++x) {
      p.inst(y, x) = 1;
      p.cls(y, x) = 1;
    }
    for (int x = 12; x < 16; ++x) {
      p.inst(y, x) = 2;
      p.cls(y, x) = 3;
    }
  }
  DistanceTarget dt = encode_distance_maps(p);
  PostprocessConfig cfg;
  cfg.min_cell_area = 1;
  std::vector<int> labels = decode_watershed(dt.sum, 24, 24, cfg);

  std::set<int> found(labels.begin(), labels.end());
  found.erase(0);
  CHECK(found.size() == 2);

  size_t mask_area = 0, labeled_area = 0;
  for (size_t i = 0; i < dt.sum.size(); ++i) {
    if (dt.sum[i] > cfg.mask_threshold) ++mask_area;
    if (labels[i] > 0) ++labeled_area;
  }
  CHECK(mask_area == labeled_area);

  // agrees with the linear-scan flood oracle
  std::vector<int> ref = oracles::scan_flood(dt.sum, 24, 24, cfg.seed_threshold,
                                             cfg.mask_threshold, cfg.min_cell_area);
  CHECK(labels == ref);

  // interiors keep their own label; the tie-broken valley may shift by a pixel
  for (size_t i = 0; i < labels.size(); ++i) {
    if (dt.sum[i] > 0.5) CHECK(labels[i] == p.instances[i]);
  }
  for (int cell = 1; cell <= 2; ++cell) {
    int inter = 0, uni = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      bool in_pred = labels[i] == cell, in_gt = p.instances[i] == cell;
      if (in_pred && in_gt) ++inter;
      if (in_pred || in_gt) ++uni;
    }
    CHECK(static_cast<double>(inter) / uni >= 0.85);
  }
}

TEST_CASE("flood matches the scan oracle on random bumpy maps") {
  Rng rng(31);
  PostprocessConfig cfg;
  cfg.min_cell_area = 1;
  for (int trial = 0; trial < 12; ++trial) {
    int h = 12, w = 15;
    std::vector<double> map(static_cast<size_t>(h) * w);
    for (double& v : map) {
      v = rng.uniform();
      if (v < 0.35) v = 0.0;  // carve background
    }
    std::vector<int> a = decode_watershed(map, h, w, cfg);
    std::vector<int> b = oracles::scan_flood(map, h, w, cfg.seed_threshold, cfg.mask_threshold,
                                             cfg.min_cell_area);
    CHECK(a == b);
  }
}

TEST_CASE("decoded instances are 4-connected and inside the mask") {
  SyntheticConfig scfg;
  scfg.seed = 41;
  scfg.n_patches = 2;
  scfg.height = 64;
  scfg.width = 64;
  scfg.density = 0.3;
  scfg.touching = true;
  PostprocessConfig cfg;
  for (const LabeledPatch& p : generate_synthetic(scfg)) {
    DistanceTarget dt = encode_distance_maps(p);
    std::vector<int> labels = decode_watershed(dt.sum, p.height, p.width, cfg);
    int num = 0;
    for (int l : labels) num = std::max(num, l);
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] > 0) CHECK(dt.sum[i] > cfg.mask_threshold);
    }
    // 4-connectivity per label
    for (int lbl = 1; lbl <= num; ++lbl) {
      std::vector<std::pair<int, int>> px;
      for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x)
          if (labels[static_cast<size_t>(y) * p.width + x] == lbl) px.emplace_back(y, x);
      REQUIRE(!px.empty());
      // flood within the label set
      std::set<std::pair<int, int>> all(px.begin(), px.end()), seen{px[0]};
      std::vector<std::pair<int, int>> stack{px[0]};
      while (!stack.empty()) {
        auto [y, x] = stack.back();
        stack.pop_back();
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          std::pair<int, int> q{y + dy[k], x + dx[k]};
          if (all.count(q) && !seen.count(q)) {
            seen.insert(q);
            stack.push_back(q);
          }
        }
      }
      CHECK(seen.size() == all.size());
    }
  }
}

TEST_CASE("raising the seed threshold never increases the instance count") {
  // Holds for isolated single-peak cells whose superlevel sets stay
  // 4-connected (noise or diagonal pinch-offs can split components as the
  // threshold rises). Chebyshev cones have square superlevel sets, so the
  // only effect of a higher threshold is that weak peaks drop out.
  Rng rng(55);
  for (int trial = 0; trial < 8; ++trial) {
    const int h = 48, w = 48;
    std::vector<double> map(static_cast<size_t>(h) * w, 0.0);
    // one cone per 16x16 tile keeps the supports disjoint; overlapping peaks
    // would form saddles, which legitimately split as the threshold rises
    for (int ty = 0; ty < 3; ++ty) {
      for (int tx = 0; tx < 3; ++tx) {
        if (rng.uniform() < 0.3) continue;
        int radius = rng.uniform_int(3, 6);
        int cy = ty * 16 + 8, cx = tx * 16 + 8;
        double peak = rng.uniform(0.25, 1.0);
        for (int y = cy - radius; y <= cy + radius; ++y) {
          for (int x = cx - radius; x <= cx + radius; ++x) {
            int cheb = std::max(std::abs(y - cy), std::abs(x - cx));
            map[static_cast<size_t>(y) * w + x] = peak * (1.0 - static_cast<double>(cheb) / (radius + 1));
          }
        }
      }
    }
    PostprocessConfig cfg;
    cfg.min_cell_area = 1;
    int prev = INT32_MAX;
    for (double seed_t : {0.2, 0.35, 0.5, 0.65, 0.8, 0.95}) {
      cfg.seed_threshold = seed_t;
      cfg.mask_threshold = 0.05;
      std::vector<int> labels = decode_watershed(map, h, w, cfg);
      int num = 0;
      for (int l : labels) num = std::max(num, l);
      CHECK(num <= prev);
      prev = num;
    }
  }
}

TEST_CASE("classification by channel sums") {
  LabeledPatch p(16, 16);
  for (int y = 2; y <= 5; ++y)
    for (int x = 2; x <= 5; ++x) {
      p.inst(y, x) = 1;
      p.cls(y, x) = 2;
    }
  for (int y = 9; y <= 12; ++y)
    for (int x = 9; x <= 12; ++x) {
      p.inst(y, x) = 2;
      p.cls(y, x) = 6;
    }
  std::vector<int> inst(p.instances.begin(), p.instances.end());

  SUBCASE("only channel 4 nonzero classifies everything as class 5") {
    Tensor4d pred(1, 6, 16, 16);
    for (int i = 0; i < 256; ++i) pred.plane(0, 4)[i] = 0.3;
    std::vector<int> classes = classify_instances(inst, 2, pred);
    CHECK(classes == std::vector<int>{5, 5});
  }

  SUBCASE("a perfect encoded target recovers ground-truth classes") {
    DistanceTarget dt = encode_distance_maps(p);
    std::vector<int> classes = classify_instances(inst, 2, target_to_tensor(dt));
    CHECK(classes == std::vector<int>{2, 6});
  }

  SUBCASE("exact tie picks the lower channel") {
    Tensor4d pred(1, 6, 16, 16);
    for (int i = 0; i < 256; ++i) {
      pred.plane(0, 1)[i] = 0.5;  // channel 1 -> class 2
      pred.plane(0, 2)[i] = 0.5;  // channel 2 -> class 3
    }
    std::vector<int> classes = classify_instances(inst, 2, pred);
    CHECK(classes == std::vector<int>{2, 2});
  }
}

TEST_CASE("postprocess composes decode, classify, count") {
  SUBCASE("zero prediction gives zero counts") {
    Tensor4d pred(1, 6, 32, 32);
    PostprocessConfig cfg;
    SegmentationResult res = postprocess(pred, cfg);
    CHECK(res.num_instances() == 0);
    CHECK(res.counts.total() == 0);
  }

  SUBCASE("encoded ground truth reproduces the counts") {
    for (bool touching : {false, true}) {
      SyntheticConfig scfg;
      scfg.seed = 23;
      scfg.n_patches = 3;
      scfg.height = 64;
      scfg.width = 64;
      scfg.density = 0.25;
      scfg.touching = touching;
      PostprocessConfig cfg;
      for (const LabeledPatch& p : generate_synthetic(scfg)) {
        DistanceTarget dt = encode_distance_maps(p);
        SegmentationResult res = postprocess(target_to_tensor(dt), cfg);
        CHECK(res.counts == count_ground_truth(p));
      }
    }
  }

  SUBCASE("a blob below the size threshold is erased") {
    LabeledPatch p(32, 32);
    for (int y = 4; y <= 11; ++y)
      for (int x = 4; x <= 11; ++x) {
        p.inst(y, x) = 1;
        p.cls(y, x) = 1;
      }
    Tensor4d pred = target_to_tensor(encode_distance_maps(p));
    // paint a tiny 2x2 bump far away on channel 3
    for (int y = 20; y <= 21; ++y)
      for (int x = 20; x <= 21; ++x) pred.at(0, 3, y, x) = 0.9;
    PostprocessConfig cfg;  // min area 10 > 4
    SegmentationResult res = postprocess(pred, cfg);
    CHECK(res.num_instances() == 1);
    CHECK(res.counts.counts == std::array<int, 6>{1, 0, 0, 0, 0, 0});
  }
}

TEST_CASE("tta equals an explicit 8-pass average and handles constant nets") {
  NetworkConfig net;
  net.depth = 1;
  net.base_features = 4;
  net.feature_cap = 8;
  net.groups = 2;
  net.seed = 9;
  ParamSet<float> params = unet_init_params<float>(net);
  Rng rng(3);
  Tensor4f image(1, 3, 16, 16);
  for (auto& v : image.data) v = static_cast<float>(rng.uniform(-1, 1));

  SUBCASE("matches the explicit loop exactly") {
    Tensor4f fused = tta_predict(net, params, image);
    Tensor4f accum;
    bool first = true;
    for (int f = 0; f < 2; ++f) {
      for (int k = 0; k < 4; ++k) {
        Tensor4f input = f ? flip_h_tensor(image) : image;
        input = rot90_tensor(input, k);
        Tensor4f out = unet_forward(net, params, input);
        out = rot90_tensor(out, -k);
        if (f) out = flip_h_tensor(out);
        if (first) {
          accum = std::move(out);
          first = false;
        } else {
          for (size_t i = 0; i < accum.data.size(); ++i) accum.data[i] += out.data[i];
        }
      }
    }
    for (float& v : accum.data) v /= 8.0f;
    CHECK(fused.data == accum.data);
  }

  SUBCASE("a network that ignores its input gives its bias everywhere") {
    ParamSet<float> constant = params;
    for (size_t i = 0; i < constant.names.size(); ++i) {
      if (constant.names[i].ends_with(".w")) {
        for (auto& v : constant.tensors[i].data) v = 0.0f;
      }
    }
    std::array<float, 6> head_bias = {0.2f, -0.4f, 0.1f, 0.0f, 1.5f, -2.0f};
    Tensor4f& hb = constant[constant.index_of("head.b")];
    for (int c = 0; c < 6; ++c) hb.data[c] = head_bias[c];

    Tensor4f plain = unet_forward(net, constant, image);
    Tensor4f fused = tta_predict(net, constant, image);
    for (int c = 0; c < 6; ++c) {
      for (int i = 0; i < 256; ++i) {
        CHECK(fused.plane(0, c)[i] == doctest::Approx(head_bias[c]).epsilon(1e-6));
        CHECK(plain.plane(0, c)[i] == doctest::Approx(fused.plane(0, c)[i]).epsilon(1e-6));
      }
    }
  }
}
