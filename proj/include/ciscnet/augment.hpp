#pragma once

#include "ciscnet/data.hpp"
#include "ciscnet/rng.hpp"

namespace ciscnet {

struct AugmentConfig {
  double p_flip_rot = 0.5;
  double p_color = 0.3;
  double p_scale = 0.3;
  double p_blur = 0.2;
  double p_noise = 0.2;

  double scale_min = 0.8, scale_max = 1.25;
  double hue_max_deg = 18.0;
  double sat_min = 0.7, sat_max = 1.3;
  double contrast_min = 0.7, contrast_max = 1.3;
  double blur_sigma_min = 0.3, blur_sigma_max = 1.5;
  double noise_sigma_max = 10.0;

  bool any_geometric() const { return p_flip_rot > 0 || p_scale > 0; }
  bool any_enabled() const {
    return p_flip_rot > 0 || p_color > 0 || p_scale > 0 || p_blur > 0 || p_noise > 0;
  }
};

// Geometric primitives act on image, instances and classes together.
LabeledPatch flip_horizontal(const LabeledPatch& p);
LabeledPatch rot90(const LabeledPatch& p, int quarter_turns);  // counterclockwise
// Center-anchored rescale; labels nearest-neighbor, image bilinear,
// canvas stays H x W (crop for factor>1, background/edge pad for factor<1).
LabeledPatch scale_patch(const LabeledPatch& p, double factor);

// Photometric primitives touch the image only, clamped back to [0,255].
void adjust_hsv_contrast(LabeledPatch& p, double hue_deg, double sat_factor,
                         double contrast_factor);
void gaussian_blur(LabeledPatch& p, double sigma);
void add_gaussian_noise(LabeledPatch& p, double sigma, Rng& rng);

// Applies each family independently with its configured probability.
LabeledPatch augment(const LabeledPatch& patch, const AugmentConfig& cfg, Rng& rng);

}  // namespace ciscnet
