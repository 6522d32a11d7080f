#include "ciscnet/encode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>

namespace ciscnet {

namespace {

struct InstanceInfo {
  uint8_t cls = 0;
  int y0 = 1 << 30, y1 = -1, x0 = 1 << 30, x1 = -1;
  std::vector<int> pixels;  // flat indices
};

}  // namespace

DistanceTarget encode_distance_maps(const LabeledPatch& patch) {
  validate_patch(patch);
  const int h = patch.height, w = patch.width;
  DistanceTarget out;
  out.height = h;
  out.width = w;
  for (auto& ch : out.channels) ch.assign(patch.npx(), 0.0);
  out.sum.assign(patch.npx(), 0.0);

  std::map<uint16_t, InstanceInfo> instances;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      uint16_t lbl = patch.inst(y, x);
      if (lbl == 0) continue;
      InstanceInfo& info = instances[lbl];
      info.cls = patch.cls(y, x);
      info.y0 = std::min(info.y0, y);
      info.y1 = std::max(info.y1, y);
      info.x0 = std::min(info.x0, x);
      info.x1 = std::max(info.x1, x);
      info.pixels.push_back(y * w + x);
    }
  }

  std::vector<std::pair<int, int>> candidates;
  std::vector<int64_t> d2;
  for (const auto& [lbl, info] : instances) {
    // The nearest non-instance pixel to any instance pixel is 4-adjacent to
    // the instance, so searching the bounding box grown by one row/column of
    // context is exact.
    int y0 = std::max(0, info.y0 - 1), y1 = std::min(h - 1, info.y1 + 1);
    int x0 = std::max(0, info.x0 - 1), x1 = std::min(w - 1, info.x1 + 1);
    candidates.clear();
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (patch.inst(y, x) == lbl) continue;
        bool adj = (y > 0 && patch.inst(y - 1, x) == lbl) ||
                   (y + 1 < h && patch.inst(y + 1, x) == lbl) ||
                   (x > 0 && patch.inst(y, x - 1) == lbl) ||
                   (x + 1 < w && patch.inst(y, x + 1) == lbl);
        if (adj) candidates.emplace_back(y, x);
      }
    }

    std::vector<double>& chan = out.channels[info.cls - 1];
    if (candidates.empty()) {
      // instance covers the whole patch: no outside pixel exists, degenerate
      for (int idx : info.pixels) chan[idx] = 1.0;
    } else {
      d2.assign(info.pixels.size(), 0);
      int64_t max_d2 = 0;
      for (size_t i = 0; i < info.pixels.size(); ++i) {
        int py = info.pixels[i] / w, px = info.pixels[i] % w;
        int64_t best = INT64_MAX;
        for (auto [qy, qx] : candidates) {
          int64_t dy = py - qy, dx = px - qx;
          int64_t dd = dy * dy + dx * dx;
          if (dd < best) best = dd;
        }
        d2[i] = best;
        max_d2 = std::max(max_d2, best);
      }
      double norm = std::sqrt(static_cast<double>(max_d2));
      for (size_t i = 0; i < info.pixels.size(); ++i) {
        chan[info.pixels[i]] = std::sqrt(static_cast<double>(d2[i])) / norm;
      }
    }
  }

  for (size_t i = 0; i < out.sum.size(); ++i) {
    double s = 0;
    for (int c = 0; c < kNumClasses; ++c) s += out.channels[c][i];
    out.sum[i] = s;
  }
  return out;
}

WeightMap compute_weight_map(const LabeledPatch& patch, double w_bg, double w_fg) {
  if (w_bg < 1.0 || w_fg < w_bg) throw InvalidWeights("need w_fg >= w_bg >= 1");
  WeightMap wm;
  wm.height = patch.height;
  wm.width = patch.width;
  wm.weights.assign(patch.npx(), w_bg);
  for (size_t i = 0; i < patch.npx(); ++i) {
    if (patch.instances[i] > 0) wm.weights[i] = w_fg;
  }
  return wm;
}

}  // namespace ciscnet
