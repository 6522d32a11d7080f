#pragma once

#include <vector>

#include "ciscnet/data.hpp"
#include "ciscnet/tensor.hpp"
#include "ciscnet/unet.hpp"

namespace ciscnet {

struct PostprocessConfig {
  double seed_threshold = 0.5;  // theta_seed
  double mask_threshold = 0.1;  // theta_mask, must be < theta_seed
  int min_cell_area = 10;       // theta_size, pixels

  void validate() const {
    if (seed_threshold <= 0 || seed_threshold >= 1 || mask_threshold <= 0 ||
        mask_threshold >= 1 || mask_threshold >= seed_threshold || min_cell_area < 1)
      throw InvalidConfig("need 0 < theta_mask < theta_seed < 1 and theta_size >= 1");
  }
};

struct SegmentationResult {
  int height = 0, width = 0;
  std::vector<int> instances;        // 0 background, labels contiguous 1..K
  std::vector<int> instance_classes; // label-1 -> class in 1..6
  CountVector counts;

  int num_instances() const { return static_cast<int>(instance_classes.size()); }
};

// Marker-controlled watershed on the channel-sum map. Seeds are 4-connected
// components above the seed threshold; flooding claims unlabeled 4-neighbors
// inside the mask in order of decreasing map value (ties: lower row-major
// index first). Regions below the size threshold are erased and survivors
// renumbered by their seed's first row-major pixel.
template <typename T>
std::vector<int> decode_watershed(const std::vector<T>& sum_pred, int height, int width,
                                  const PostprocessConfig& cfg);

// Per instance, sums each prediction channel over the instance pixels and
// picks the argmax class (ties: lowest channel).
template <typename T>
std::vector<int> classify_instances(const std::vector<int>& instances, int num_labels,
                                    const Tensor4<T>& class_pred);

template <typename T>
SegmentationResult postprocess(const Tensor4<T>& pred, const PostprocessConfig& cfg);

// Dihedral test-time augmentation: mean over the 8 flip/rotation variants,
// each prediction mapped back to the original frame. Transform order is
// flip-major: f in {0,1}, then k quarter turns ccw in {0,1,2,3}.
Tensor4f tta_predict(const NetworkConfig& cfg, const ParamSet<float>& params,
                     const Tensor4f& image);

Tensor4f rot90_tensor(const Tensor4f& t, int quarter_turns);
Tensor4f flip_h_tensor(const Tensor4f& t);

}  // namespace ciscnet
