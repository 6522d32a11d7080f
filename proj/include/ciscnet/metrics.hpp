#pragma once

#include <array>
#include <string>
#include <tuple>
#include <vector>

#include "ciscnet/data.hpp"
#include "ciscnet/postprocess.hpp"

namespace ciscnet {

// One class, one image: IoU > 0.5 matches, which are one-to-one by
// construction; the rest are false positives / false negatives.
struct ClassMatch {
  std::vector<std::tuple<int, int, double>> matches;  // (pred label, gt label, IoU)
  std::vector<int> unmatched_pred;
  std::vector<int> unmatched_gt;
};

ClassMatch match_instances(const SegmentationResult& pred, const LabeledPatch& gt, int cls);

// Aggregated per-class statistics across a dataset.
struct ClassStats {
  double iou_sum = 0;
  int tp = 0, fp = 0, fn = 0;
  bool present() const { return tp + fp + fn > 0; }
};

double panoptic_quality(double iou_sum, int tp, int fp, int fn);

// Dataset-level aggregation first (the "+" variant), one PQ per class, then
// the mean over classes present in GT or predictions. strict_six_class keeps
// absent classes in the average as zeros.
struct MpqResult {
  std::array<double, kNumClasses> per_class{};
  std::array<bool, kNumClasses> included{};
  double mpq = 0;
};
MpqResult mpq_plus(const std::vector<std::array<ClassStats, kNumClasses>>& per_image,
                   bool strict_six_class = false);

// Per class over patches: R2 = 1 - SS_res/SS_tot; zero-variance classes give
// 1 for exact predictions, else 0. multi_r2 is the mean over all six.
struct R2Result {
  std::array<double, kNumClasses> per_class{};
  double multi = 0;
};
R2Result r2_counts(const std::vector<CountVector>& pred, const std::vector<CountVector>& gt);

struct CountsRow {
  int patch_id = 0;
  int cls = 0;  // 1..6
  int gt_count = 0, pred_count = 0;
};

struct MetricsReport {
  std::array<double, kNumClasses> per_class_pq{};
  std::array<bool, kNumClasses> class_included{};
  double mpq_plus = 0;
  std::array<double, kNumClasses> per_class_r2{};
  double multi_r2 = 0;
  std::vector<CountsRow> counts_table;
};

MetricsReport evaluate(const std::vector<LabeledPatch>& gt,
                       const std::vector<SegmentationResult>& pred,
                       bool strict_six_class = false);

std::string report_to_json(const MetricsReport& report);
std::string counts_table_csv(const MetricsReport& report);

}  // namespace ciscnet
