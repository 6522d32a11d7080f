#include "ciscnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>

namespace ciscnet {

using json = nlohmann::json;

ClassMatch match_instances(const SegmentationResult& pred, const LabeledPatch& gt, int cls) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw LengthMismatch("prediction and ground truth dimensions");
  const size_t npx = gt.npx();

  // areas of the class-restricted instances
  std::map<int, int> pred_area, gt_area;
  for (int l = 1; l <= pred.num_instances(); ++l) {
    if (pred.instance_classes[l - 1] == cls) pred_area[l] = 0;
  }
  std::map<uint16_t, int> gt_label_area;
  std::map<std::pair<int, int>, int> overlap;  // (gt label, pred label) -> pixels
  for (size_t i = 0; i < npx; ++i) {
    int pl = pred.instances[i];
    bool p_in = pl > 0 && pred.instance_classes[pl - 1] == cls;
    bool g_in = gt.instances[i] > 0 && gt.classes[i] == cls;
    if (p_in) pred_area[pl]++;
    if (g_in) gt_area[gt.instances[i]]++;
    if (p_in && g_in) overlap[{gt.instances[i], pl}]++;
  }

  ClassMatch out;
  std::map<int, bool> pred_matched, gt_matched;
  for (const auto& [key, inter] : overlap) {
    auto [gl, pl] = key;
    double uni = static_cast<double>(gt_area[gl] + pred_area[pl] - inter);
    double iou = inter / uni;
    if (iou > 0.5) {
      out.matches.emplace_back(pl, gl, iou);
      pred_matched[pl] = true;
      gt_matched[gl] = true;
    }
  }
  for (const auto& [pl, area] : pred_area) {
    if (!pred_matched.count(pl)) out.unmatched_pred.push_back(pl);
  }
  for (const auto& [gl, area] : gt_area) {
    if (!gt_matched.count(gl)) out.unmatched_gt.push_back(gl);
  }
  return out;
}

double panoptic_quality(double iou_sum, int tp, int fp, int fn) {
  if (tp < 0 || fp < 0 || fn < 0) throw InvalidConfig("negative counts");
  double denom = tp + 0.5 * fp + 0.5 * fn;
  if (denom == 0) return 0.0;
  return iou_sum / denom;
}

MpqResult mpq_plus(const std::vector<std::array<ClassStats, kNumClasses>>& per_image,
                   bool strict_six_class) {
  if (per_image.empty()) throw EmptyDataset();
  std::array<ClassStats, kNumClasses> agg{};
  for (const auto& img : per_image) {
    for (int c = 0; c < kNumClasses; ++c) {
      agg[c].iou_sum += img[c].iou_sum;
      agg[c].tp += img[c].tp;
      agg[c].fp += img[c].fp;
      agg[c].fn += img[c].fn;
    }
  }
  MpqResult res;
  double total = 0;
  int included = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    res.per_class[c] = panoptic_quality(agg[c].iou_sum, agg[c].tp, agg[c].fp, agg[c].fn);
    res.included[c] = strict_six_class || agg[c].present();
    if (res.included[c]) {
      total += res.per_class[c];
      ++included;
    }
  }
  res.mpq = included > 0 ? total / included : 0.0;
  return res;
}

R2Result r2_counts(const std::vector<CountVector>& pred, const std::vector<CountVector>& gt) {
  if (pred.size() != gt.size()) throw LengthMismatch("count lists");
  if (gt.size() < 2) throw TooFewPatches();
  R2Result res;
  double total = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    double mean = 0;
    for (const CountVector& cv : gt) mean += cv.counts[c];
    mean /= static_cast<double>(gt.size());
    double ss_res = 0, ss_tot = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
      double d = pred[i].counts[c] - gt[i].counts[c];
      ss_res += d * d;
      double m = gt[i].counts[c] - mean;
      ss_tot += m * m;
    }
    double r2;
    if (ss_tot == 0) {
      r2 = ss_res == 0 ? 1.0 : 0.0;
    } else {
      r2 = 1.0 - ss_res / ss_tot;
    }
    res.per_class[c] = r2;
    total += r2;
  }
  res.multi = total / kNumClasses;
  return res;
}

MetricsReport evaluate(const std::vector<LabeledPatch>& gt,
                       const std::vector<SegmentationResult>& pred, bool strict_six_class) {
  if (gt.size() != pred.size()) throw LengthMismatch("dataset and prediction counts");
  if (gt.empty()) throw EmptyDataset();

  std::vector<std::array<ClassStats, kNumClasses>> per_image(gt.size());
  std::vector<CountVector> gt_counts(gt.size()), pred_counts(gt.size());
  for (size_t i = 0; i < gt.size(); ++i) {
    for (int c = 1; c <= kNumClasses; ++c) {
      ClassMatch m = match_instances(pred[i], gt[i], c);
      ClassStats& s = per_image[i][c - 1];
      s.tp = static_cast<int>(m.matches.size());
      s.fp = static_cast<int>(m.unmatched_pred.size());
      s.fn = static_cast<int>(m.unmatched_gt.size());
      for (const auto& [pl, gl, iou] : m.matches) s.iou_sum += iou;
    }
    gt_counts[i] = count_ground_truth(gt[i]);
    pred_counts[i] = pred[i].counts;
  }

  MetricsReport report;
  MpqResult mpq = mpq_plus(per_image, strict_six_class);
  report.per_class_pq = mpq.per_class;
  report.class_included = mpq.included;
  report.mpq_plus = mpq.mpq;
  if (gt.size() >= 2) {
    R2Result r2 = r2_counts(pred_counts, gt_counts);
    report.per_class_r2 = r2.per_class;
    report.multi_r2 = r2.multi;
  } else {
    // single patch: exactness is the only meaningful signal
    for (int c = 0; c < kNumClasses; ++c)
      report.per_class_r2[c] = pred_counts[0].counts[c] == gt_counts[0].counts[c] ? 1.0 : 0.0;
    double t = 0;
    for (double v : report.per_class_r2) t += v;
    report.multi_r2 = t / kNumClasses;
  }
  for (size_t i = 0; i < gt.size(); ++i) {
    for (int c = 1; c <= kNumClasses; ++c) {
      report.counts_table.push_back({static_cast<int>(i), c, gt_counts[i].counts[c - 1],
                                     pred_counts[i].counts[c - 1]});
    }
  }
  return report;
}

std::string report_to_json(const MetricsReport& report) {
  json j;
  j["per_class_pq"] = report.per_class_pq;
  j["class_included"] = report.class_included;
  j["mpq_plus"] = report.mpq_plus;
  j["per_class_r2"] = report.per_class_r2;
  j["multi_r2"] = report.multi_r2;
  j["class_names"] = kClassNames;
  std::string out = j.dump(2);
  out.push_back('\n');
  return out;
}

std::string counts_table_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "patch_id,class,gt_count,pred_count\n";
  for (const CountsRow& row : report.counts_table) {
    os << row.patch_id << "," << kClassNames[row.cls - 1] << "," << row.gt_count << ","
       << row.pred_count << "\n";
  }
  return os.str();
}

}  // namespace ciscnet
