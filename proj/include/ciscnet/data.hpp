#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ciscnet/errors.hpp"

namespace ciscnet {

constexpr int kNumClasses = 6;

// Channel order is fixed; channel c holds class c+1.
extern const std::array<std::string, kNumClasses> kClassNames;

// Ground-truth unit: RGB image plus instance and class label maps.
// instances: 0 = background, positive labels need not be contiguous.
// classes: 0 = background, 1..6 = cell type.
struct LabeledPatch {
  int height = 0, width = 0;
  std::vector<uint8_t> image;      // H*W*3 interleaved RGB
  std::vector<uint16_t> instances; // H*W row-major
  std::vector<uint8_t> classes;    // H*W row-major

  LabeledPatch() = default;
  LabeledPatch(int h, int w)
      : height(h), width(w),
        image(static_cast<size_t>(h) * w * 3, 0),
        instances(static_cast<size_t>(h) * w, 0),
        classes(static_cast<size_t>(h) * w, 0) {}

  size_t npx() const { return static_cast<size_t>(height) * width; }
  uint16_t inst(int y, int x) const { return instances[static_cast<size_t>(y) * width + x]; }
  uint8_t cls(int y, int x) const { return classes[static_cast<size_t>(y) * width + x]; }
  uint8_t rgb(int y, int x, int ch) const {
    return image[(static_cast<size_t>(y) * width + x) * 3 + ch];
  }
  uint16_t& inst(int y, int x) { return instances[static_cast<size_t>(y) * width + x]; }
  uint8_t& cls(int y, int x) { return classes[static_cast<size_t>(y) * width + x]; }
  uint8_t& rgb(int y, int x, int ch) {
    return image[(static_cast<size_t>(y) * width + x) * 3 + ch];
  }
};

struct ManifestEntry {
  std::string image, instances, classes;
};

struct DatasetManifest {
  int patch_count = 0;
  int height = 0, width = 0;
  std::array<std::string, kNumClasses> class_names = kClassNames;
  std::vector<ManifestEntry> entries;
  std::optional<int64_t> seed;
};

struct CountVector {
  std::array<int, kNumClasses> counts{};
  int total() const {
    int s = 0;
    for (int c : counts) s += c;
    return s;
  }
  bool operator==(const CountVector&) const = default;
};

// Throws on any LabeledPatch invariant violation.
void validate_patch(const LabeledPatch& patch);

// Directory layout: manifest.json + per patch img_/inst_/cls_ files.
std::vector<LabeledPatch> load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::vector<LabeledPatch>& patches, const std::filesystem::path& dir,
                  std::optional<int64_t> seed = std::nullopt);

struct SyntheticConfig {
  int64_t seed = 0;
  int n_patches = 1;
  int height = 256, width = 256;
  double density = 0.1;  // target fraction of pixels covered by nuclei, (0,1]
  std::array<double, kNumClasses> class_weights{1, 1, 1, 1, 1, 1};
  bool touching = false;  // allow cells to sit adjacent to each other
  int min_cell_area = 12; // rasterized pixel floor per nucleus
};

// Deterministic H&E-like patches: dark blue-purple filled ellipses on a
// pink-white background. Axis lengths are sampled from [3,12] px.
// counts_out, when given, receives the generator's per-class bookkeeping.
std::vector<LabeledPatch> generate_synthetic(const SyntheticConfig& cfg,
                                             std::vector<CountVector>* counts_out = nullptr);

CountVector count_ground_truth(const LabeledPatch& patch);

}  // namespace ciscnet
