#pragma once

#include <vector>

#include "iddr/camera.hpp"
#include "iddr/common.hpp"
#include "iddr/dataset.hpp"
#include "iddr/renderer.hpp"

namespace iddr {

// Supervision batch over rays that are unmasked in their own view. Rendered
// and target colors are background-composited pixel colors.
template <typename S>
struct RayBatchSupervision {
  std::vector<Ray> rays;           // optional bookkeeping; must all be unmasked
  std::vector<Vec3<S>> rendered;   // current render per ray
  std::vector<Vec3<S>> target;     // ground-truth pixel color per ray
  std::vector<int> mvcl_counts;    // n_r per ray
  S scale_factor = S(1);           // MVCL scale s

  std::size_t size() const { return rendered.size(); }

  void validate() const {
    check(rendered.size() == target.size(), "batch length mismatch");
    if (!rays.empty()) {
      check(rays.size() == rendered.size(), "batch ray list length mismatch");
      for (const Ray& r : rays) check(!r.masked, "supervision batch contains a masked ray");
    }
  }
};

template <typename S>
struct RayLoss {
  S value = S(0);
  std::vector<Vec3<S>> grads;  // d(loss)/d(rendered color), per ray
};

inline constexpr double kResidualFloor = 1e-12;

// Mean Euclidean color residual over the batch. The norm is not
// differentiable at zero residual; the gradient is defined as 0 there.
template <typename S>
inline RayLoss<S> photometric_loss(const RayBatchSupervision<S>& batch) {
  check(!batch.rendered.empty(), "photometric loss needs a non-empty batch");
  batch.validate();
  const S inv_n = S(1) / static_cast<S>(batch.size());
  RayLoss<S> out;
  out.grads.resize(batch.size(), Vec3<S>::Zero());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec3<S> residual = batch.rendered[i] - batch.target[i];
    const S norm = residual.norm();
    out.value += norm * inv_n;
    if (norm > S(kResidualFloor)) out.grads[i] = residual * (inv_n / norm);
  }
  return out;
}

// Number of views whose reprojection of the ray's expected-depth point lands
// on-screen and outside every box of that view. Off-screen projections do not
// count. The ray's own view participates like any other.
inline int mvcl_count(const Ray& ray, const std::vector<ViewRecord>& views, double depth) {
  check(depth > 0, "mvcl_count needs a positive depth");
  const Vec3d point = ray.origin + depth * ray.direction;
  int count = 0;
  for (const ViewRecord& view : views) {
    double px, py;
    if (!view.pose.project(view.camera, point, px, py)) continue;
    if (px < 0 || px > view.camera.width - 1 || py < 0 || py > view.camera.height - 1) {
      continue;
    }
    if (!pixel_in_boxes(px, py, view.boxes)) ++count;
  }
  return count;
}

// Multi-view compensation: photometric residuals re-weighted by how many
// views see the ray's surface point outside any box.
template <typename S>
inline RayLoss<S> mvcl_loss(const RayBatchSupervision<S>& batch) {
  check(!batch.rendered.empty(), "mvcl loss needs a non-empty batch");
  batch.validate();
  check(batch.mvcl_counts.size() == batch.size(), "mvcl counts not populated");
  check(batch.scale_factor > S(0), "mvcl scale factor must be positive");
  const S inv_n = S(1) / static_cast<S>(batch.size());
  RayLoss<S> out;
  out.grads.resize(batch.size(), Vec3<S>::Zero());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec3<S> residual = batch.rendered[i] - batch.target[i];
    const S norm = residual.norm();
    const S w = batch.scale_factor * static_cast<S>(batch.mvcl_counts[i]) * inv_n;
    out.value += w * norm;
    if (norm > S(kResidualFloor)) out.grads[i] = residual * (w / norm);
  }
  return out;
}

// Warm-up schedule for the auxiliary loss weights: small values while the
// coarse scene forms, larger ones afterwards to refine box interiors.
struct LambdaSchedule {
  int warmup_iterations = 400;
  double lambda1_pre = 0.01;
  double lambda2_pre = 0.1;
  double lambda1_post = 0.1;
  double lambda2_post = 0.5;

  double lambda1(std::uint64_t iteration) const {
    return iteration < static_cast<std::uint64_t>(warmup_iterations) ? lambda1_pre
                                                                     : lambda1_post;
  }
  double lambda2(std::uint64_t iteration) const {
    return iteration < static_cast<std::uint64_t>(warmup_iterations) ? lambda2_pre
                                                                     : lambda2_post;
  }
};

struct LossBreakdown {
  double rgb = 0;
  double mvcl = 0;
  double lpips = 0;
  double total = 0;
  double lambda1 = 0;
  double lambda2 = 0;
};

inline LossBreakdown total_loss(double rgb, double mvcl, double lpips,
                                const LambdaSchedule& schedule, std::uint64_t iteration) {
  LossBreakdown out;
  out.rgb = rgb;
  out.mvcl = mvcl;
  out.lpips = lpips;
  out.lambda1 = schedule.lambda1(iteration);
  out.lambda2 = schedule.lambda2(iteration);
  out.total = rgb + out.lambda1 * mvcl + out.lambda2 * lpips;
  return out;
}

}  // namespace iddr
