#pragma once

#include <optional>
#include <vector>

#include "seeco/error.hpp"
#include "seeco/types.hpp"

namespace seeco::bench {

struct IouReport {
  std::vector<std::optional<double>> per_class_iou;  // empty where the class is absent from both maps
  double miou = 0.0;
  std::size_t present_classes = 0;
};

/// IoU_j = |pred=j and gt=j| / |pred=j or gt=j|; classes absent from both
/// maps are left out of the mean.
inline IouReport miou(const LabelMap& pred, const LabelMap& gt, std::size_t classes) {
  require(pred.height == gt.height && pred.width == gt.width && pred.labels.size() == gt.labels.size(),
          ErrorCode::kShapeMismatch, "prediction and ground truth differ in size");
  std::vector<std::size_t> inter(classes, 0), pred_count(classes, 0), gt_count(classes, 0);
  for (std::size_t p = 0; p < gt.labels.size(); ++p) {
    const std::size_t a = pred.labels[p], b = gt.labels[p];
    require(a < classes && b < classes, ErrorCode::kFormatError, "label outside [0, classes)");
    ++pred_count[a];
    ++gt_count[b];
    if (a == b) ++inter[a];
  }
  IouReport out;
  out.per_class_iou.resize(classes);
  double sum = 0.0;
  for (std::size_t j = 0; j < classes; ++j) {
    const std::size_t uni = pred_count[j] + gt_count[j] - inter[j];
    if (uni == 0) continue;
    const double iou = static_cast<double>(inter[j]) / static_cast<double>(uni);
    out.per_class_iou[j] = iou;
    sum += iou;
    ++out.present_classes;
  }
  out.miou = out.present_classes ? sum / static_cast<double>(out.present_classes) : 0.0;
  return out;
}

}  // namespace seeco::bench
