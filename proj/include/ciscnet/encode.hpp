#pragma once

#include <array>
#include <vector>

#include "ciscnet/data.hpp"

namespace ciscnet {

// Per-class, per-cell normalized Euclidean distance maps. Channel c covers
// class c+1; at most one channel is nonzero at any pixel and every instance
// peaks at exactly 1.0. sum is the elementwise channel sum (the overall map).
struct DistanceTarget {
  int height = 0, width = 0;
  std::array<std::vector<double>, kNumClasses> channels;
  std::vector<double> sum;

  double chan(int c, int y, int x) const {
    return channels[c][static_cast<size_t>(y) * width + x];
  }
};

struct WeightMap {
  int height = 0, width = 0;
  std::vector<double> weights;  // w_bg on background, w_fg on nuclei
};

// Distance of each instance pixel to the nearest pixel NOT in that instance
// (other instances count as outside), divided by the instance maximum.
// Image borders are not treated as outside.
DistanceTarget encode_distance_maps(const LabeledPatch& patch);

WeightMap compute_weight_map(const LabeledPatch& patch, double w_bg, double w_fg);

}  // namespace ciscnet
