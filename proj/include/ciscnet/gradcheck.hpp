#pragma once

#include <string>
#include <vector>

#include "ciscnet/unet.hpp"

namespace ciscnet {

// Central finite-difference verification of the reverse-mode gradients,
// run in 64-bit. Used by the gradcheck subcommand and the test suites.
struct GradCheckConfig {
  NetworkConfig net{3, 6, 2, 8, 64, 8, 1e-5, 1};
  int input_h = 8, input_w = 8;
  double step = 1e-5;
  double tolerance = 1e-4;
  double loss_tolerance = 1e-6;
  uint64_t seed = 1;
  int threads = 2;
  std::string corrupt;  // test hook: parameter tensor whose gradient is perturbed
};

struct LayerCheck {
  std::string name;
  double max_rel_err = 0;
};

struct GradCheckReport {
  std::vector<LayerCheck> layers;
  double net_max_rel_err = 0;
  double loss_max_rel_err = 0;
  bool pass = false;
  std::string worst_layer;
};

GradCheckReport run_gradcheck(const GradCheckConfig& cfg);

}  // namespace ciscnet
