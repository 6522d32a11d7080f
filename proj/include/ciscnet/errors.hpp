#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ciscnet {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// data
struct MissingFile : Error {
  explicit MissingFile(const std::string& path) : Error("missing file: " + path) {}
};
struct IoFailure : Error {
  explicit IoFailure(const std::string& what) : Error("i/o failure: " + what) {}
};
struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string& what) : Error("dimension mismatch: " + what) {}
};
struct HeterogeneousDimensions : Error {
  HeterogeneousDimensions() : Error("patches do not share identical dimensions") {}
};
struct InconsistentLabels : Error {
  uint32_t label;
  explicit InconsistentLabels(uint32_t l)
      : Error("instance label " + std::to_string(l) + " spans more than one class"), label(l) {}
};
struct InvalidWeights : Error {
  explicit InvalidWeights(const std::string& what) : Error("invalid weights: " + what) {}
};
struct DimensionTooSmall : Error {
  explicit DimensionTooSmall(const std::string& what) : Error("dimension too small: " + what) {}
};

// net
struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& what) : Error("shape mismatch: " + what) {}
};
struct IndivisibleGroups : Error {
  explicit IndivisibleGroups(const std::string& what) : Error("channels not divisible by groups: " + what) {}
};
struct IndivisibleDimensions : Error {
  explicit IndivisibleDimensions(const std::string& what) : Error("dimensions not divisible: " + what) {}
};
struct CheckpointMismatch : Error {
  explicit CheckpointMismatch(const std::string& what) : Error("checkpoint mismatch: " + what) {}
};

// train
struct EmptyAfterFilter : Error {
  EmptyAfterFilter() : Error("no patches remain after removing empty ones") {}
};
struct OutOfRange : Error {
  explicit OutOfRange(const std::string& what) : Error("value out of range: " + what) {}
};
struct StepOutOfRange : Error {
  explicit StepOutOfRange(const std::string& what) : Error("step out of range: " + what) {}
};

// postprocess / metrics
struct InvalidConfig : Error {
  explicit InvalidConfig(const std::string& what) : Error("invalid config: " + what) {}
};
struct EmptyInstance : Error {
  explicit EmptyInstance(int label) : Error("instance label " + std::to_string(label) + " has no pixels") {}
};
struct LengthMismatch : Error {
  explicit LengthMismatch(const std::string& what) : Error("length mismatch: " + what) {}
};
struct TooFewPatches : Error {
  TooFewPatches() : Error("need at least 2 patches for count R2") {}
};
struct EmptyDataset : Error {
  EmptyDataset() : Error("dataset is empty") {}
};

}  // namespace ciscnet
