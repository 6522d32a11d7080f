#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ciscnet/layers.hpp"
#include "ciscnet/tensor.hpp"

namespace ciscnet {

struct NetworkConfig {
  int in_channels = 3;
  int out_channels = 6;
  int depth = 4;          // number of downsamplings
  int base_features = 64; // features at full resolution
  int feature_cap = 1024;
  int groups = 8;
  double eps = 1e-5;
  uint64_t seed = 1;

  int features_at(int level) const {
    int64_t f = static_cast<int64_t>(base_features) << level;
    return static_cast<int>(std::min<int64_t>(f, feature_cap));
  }
  void validate() const;
};

// Ordered collection of named parameter tensors. Order is the on-disk and
// gradient-accumulation order.
template <typename T>
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor4<T>> tensors;

  int add(const std::string& name, Tensor4<T> t) {
    names.push_back(name);
    tensors.push_back(std::move(t));
    return static_cast<int>(tensors.size()) - 1;
  }
  int index_of(const std::string& name) const {
    for (size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    throw ShapeMismatch("unknown parameter " + name);
  }
  Tensor4<T>& operator[](int i) { return tensors[i]; }
  const Tensor4<T>& operator[](int i) const { return tensors[i]; }
  size_t count() const {
    size_t total = 0;
    for (const auto& t : tensors) total += t.size();
    return total;
  }
};

struct ParamShape {
  std::string name;
  std::array<int, 4> dims;
};

// Shape walk without allocation; also defines the canonical parameter order.
std::vector<ParamShape> unet_param_shapes(const NetworkConfig& cfg);
int64_t unet_param_count(const NetworkConfig& cfg);

// He-uniform fan-in conv weights, zero biases, gamma=1, beta=0; seeded.
template <typename T>
ParamSet<T> unet_init_params(const NetworkConfig& cfg);

// Saved activations from one forward pass, consumed by unet_backward.
template <typename T>
struct UnetCache {
  struct Step {
    int kind = 0;          // OpKind in unet.cpp
    int param = -1;        // first parameter index (weight or gamma)
    int param2 = -1;       // bias or beta
    int stride = 1, pad = 0;
    int skip_id = -1;
    int concat_main_c = 0;
    Tensor4<T> saved;      // op input
    GroupNormCtx<T> gn;
  };
  std::vector<Step> steps;
  int in_n = 0, in_c = 0, in_h = 0, in_w = 0;
};

// N x in_channels x H x W -> N x out_channels x H x W, linear output head.
// H and W must be divisible by 2^depth.
template <typename T>
Tensor4<T> unet_forward(const NetworkConfig& cfg, const ParamSet<T>& params, const Tensor4<T>& x,
                        UnetCache<T>* cache = nullptr);

// Exact reverse-mode gradients for every parameter; optionally for the input.
template <typename T>
ParamSet<T> unet_backward(const NetworkConfig& cfg, const ParamSet<T>& params,
                          const UnetCache<T>& cache, const Tensor4<T>& upstream,
                          Tensor4<T>* dx = nullptr);

template <typename T>
ParamSet<T> zeros_like(const ParamSet<T>& params);

template <typename To, typename From>
ParamSet<To> param_cast(const ParamSet<From>& p) {
  ParamSet<To> out;
  for (size_t i = 0; i < p.tensors.size(); ++i)
    out.add(p.names[i], tensor_cast<To>(p.tensors[i]));
  return out;
}

// Checkpoint: version line, manifest JSON (names/shapes/dtype), then raw
// little-endian 32-bit floats in manifest order.
inline constexpr const char* kCheckpointVersion = "ciscnet-ckpt-v1";
void save_checkpoint(const std::filesystem::path& path, const NetworkConfig& cfg,
                     const ParamSet<float>& params);
ParamSet<float> load_checkpoint(const std::filesystem::path& path, NetworkConfig& cfg_out);

}  // namespace ciscnet
