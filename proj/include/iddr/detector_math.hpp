#pragma once

#include <vector>

#include "iddr/bbox.hpp"
#include "iddr/common.hpp"

namespace iddr {

// Anchor-free regression targets of a feature-map location against a box:
// signed distances to the four box sides. A location is positive when it
// lies inside the box (all four offsets non-negative).
struct FcosTargets {
  double x0s = 0;  // x - x0
  double x1s = 0;  // x1 - x
  double y0s = 0;  // y - y0
  double y1s = 0;  // y1 - y
  double centerness = 0;
  int class_label = 0;
  bool positive = false;
};

inline double fcos_centerness(const FcosTargets& t) {
  check(t.x0s >= 0 && t.x1s >= 0 && t.y0s >= 0 && t.y1s >= 0,
        "centerness needs non-negative offsets");
  const double mx = std::max(t.x0s, t.x1s);
  const double my = std::max(t.y0s, t.y1s);
  check(mx > 0 && my > 0, "centerness undefined for degenerate offsets");
  return std::sqrt((std::min(t.x0s, t.x1s) / mx) * (std::min(t.y0s, t.y1s) / my));
}

inline FcosTargets fcos_targets(double x, double y, const BBox& box) {
  FcosTargets t;
  t.x0s = x - box.x0;
  t.x1s = box.x1 - x;
  t.y0s = y - box.y0;
  t.y1s = box.y1 - y;
  t.class_label = box.class_id;
  t.positive = t.x0s >= 0 && t.x1s >= 0 && t.y0s >= 0 && t.y1s >= 0;
  if (t.positive) t.centerness = fcos_centerness(t);
  return t;
}

// Focal loss -alpha_t (1 - p_t)^gamma log(p_t); probabilities are clamped
// away from {0,1} so the log stays finite.
inline double focal_loss(double p, int p_star, double alpha = 0.25, double gamma = 2.0) {
  check(p_star == 0 || p_star == 1, "focal loss label must be 0 or 1");
  p = std::clamp(p, 1e-7, 1.0 - 1e-7);
  const double p_t = p_star == 1 ? p : 1.0 - p;
  const double alpha_t = p_star == 1 ? alpha : 1.0 - alpha;
  return -alpha_t * std::pow(1.0 - p_t, gamma) * std::log(p_t);
}

// -log of the overlap ratio between predicted and target offsets around the
// shared location. The ratio sums per-axis segment overlaps: for each of the
// four side distances, min(pred, target) contributes to the intersection and
// max(pred, target) to the union extent.
inline double iou_loss(const FcosTargets& pred, const FcosTargets& target) {
  check(pred.x0s >= 0 && pred.x1s >= 0 && pred.y0s >= 0 && pred.y1s >= 0 &&
        target.x0s >= 0 && target.x1s >= 0 && target.y0s >= 0 && target.y1s >= 0,
        "iou loss needs non-negative offsets");
  check((target.x0s + target.x1s) * (target.y0s + target.y1s) > 0,
        "iou loss target box has zero area");
  const double inter = std::min(pred.x0s, target.x0s) + std::min(pred.x1s, target.x1s) +
                       std::min(pred.y0s, target.y0s) + std::min(pred.y1s, target.y1s);
  const double uni = std::max(pred.x0s, target.x0s) + std::max(pred.x1s, target.x1s) +
                     std::max(pred.y0s, target.y0s) + std::max(pred.y1s, target.y1s);
  const double iou = std::max(inter / uni, 1e-7);
  return -std::log(iou);
}

inline double binary_cross_entropy(double p, double target) {
  p = std::clamp(p, 1e-7, 1.0 - 1e-7);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

// One feature-map location's raw predictions.
struct LocationPrediction {
  double class_prob = 0.5;   // probability assigned to the target class
  FcosTargets offsets;       // predicted side distances
  double centerness = 0.5;   // predicted centerness score
};

struct DetectionLossTerms {
  double cls = 0;
  double reg = 0;
  double ctr = 0;
  int n_pos = 0;
  double lambda = 1.0;
  double total = 0;
};

inline double combine_detection_loss(double cls_sum, double reg_sum, double ctr_sum,
                                     int n_pos, double lambda) {
  const double norm = n_pos >= 1 ? static_cast<double>(n_pos) : 1.0;
  return cls_sum / norm + lambda * reg_sum / norm + ctr_sum / norm;
}

// Composite detection loss over a feature map: focal classification over all
// locations, IoU regression and centerness BCE over positive locations only,
// each normalized by the positive count.
inline DetectionLossTerms detection_loss(const std::vector<LocationPrediction>& predictions,
                                         const std::vector<FcosTargets>& targets,
                                         double lambda) {
  check(predictions.size() == targets.size(), "detection loss length mismatch");
  check(!predictions.empty(), "detection loss needs at least one location");
  DetectionLossTerms terms;
  terms.lambda = lambda;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const int p_star = targets[i].positive ? 1 : 0;
    terms.cls += focal_loss(predictions[i].class_prob, p_star);
    if (p_star == 1) {
      terms.reg += iou_loss(predictions[i].offsets, targets[i]);
      terms.ctr += binary_cross_entropy(predictions[i].centerness, targets[i].centerness);
      ++terms.n_pos;
    }
  }
  terms.total = combine_detection_loss(terms.cls, terms.reg, terms.ctr, terms.n_pos, lambda);
  return terms;
}

}  // namespace iddr
