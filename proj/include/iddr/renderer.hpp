#pragma once

#include <optional>
#include <vector>

#include "iddr/camera.hpp"
#include "iddr/common.hpp"
#include "iddr/dataset.hpp"
#include "iddr/thread_pool.hpp"

namespace iddr {

struct Ray {
  Vec3d origin = Vec3d::Zero();
  Vec3d direction = Vec3d::UnitZ();
  double pixel_x = 0;
  double pixel_y = 0;
  int view_id = -1;
  bool masked = false;  // true iff the pixel lies inside a box of its own view
};

struct SamplePoint {
  Vec3d position = Vec3d::Zero();
  double t = 0;
  double delta = 0;
};

template <typename S>
struct CompositeResult {
  Vec3<S> color = Vec3<S>::Zero();          // pure volume term, no background
  S transmittance_remainder = S(1);
  S expected_depth = S(0);
  std::vector<S> weights;
};

using RenderResult = CompositeResult<double>;

// Sampling and compositing knobs shared by training and rendering paths.
struct RenderConfig {
  double near = 0.05;
  double far = 4.0;
  int n_samples = 128;
  bool jitter = false;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;        // folded into per-ray jitter streams
  Aabbd aabb;                         // encoder domain in world space
  Vec3<float> background{1.f, 1.f, 1.f};
  // Training-path transmittance cutoff; samples behind a nearly opaque prefix
  // are dropped. 0 disables.
  double transmittance_cutoff = 1e-7;
};

inline Ray generate_ray(const ViewRecord& view, int pixel_x, int pixel_y) {
  check(pixel_x >= 0 && pixel_x < view.camera.width && pixel_y >= 0 &&
        pixel_y < view.camera.height, "pixel outside image bounds");
  Ray ray;
  ray.origin = view.pose.translation;
  ray.direction = view.pose.pixel_direction(view.camera, pixel_x, pixel_y);
  ray.pixel_x = pixel_x;
  ray.pixel_y = pixel_y;
  ray.view_id = view.view_id;
  ray.masked = pixel_in_boxes(pixel_x, pixel_y, view.boxes);
  return ray;
}

// Stratified samples over [near, far]: one draw per equal-width bin, bin
// midpoints when jitter is off. delta_i = t_{i+1} - t_i with the trailing
// delta set to the bin width.
inline std::vector<SamplePoint> sample_ray(const Ray& ray, double near, double far,
                                           int n, bool jitter, std::uint64_t seed) {
  check(near >= 0 && near < far, "need 0 <= near < far");
  check(n >= 2, "need at least two samples per ray");
  const double h = (far - near) / n;
  std::vector<SamplePoint> samples(n);
  StreamRng rng(seed);
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? rng.next_double() : 0.5;
    samples[i].t = near + (i + u) * h;
    samples[i].position = ray.origin + samples[i].t * ray.direction;
  }
  for (int i = 0; i + 1 < n; ++i) samples[i].delta = samples[i + 1].t - samples[i].t;
  samples[n - 1].delta = h;
  return samples;
}

// Deterministic per-ray stream: parallel draw order cannot influence results.
inline std::uint64_t ray_jitter_seed(std::uint64_t seed, int view_id,
                                     std::uint64_t pixel_index, std::uint64_t iteration) {
  return mix_seed(mix_seed(seed, 0x7261797Bull + view_id),
                  mix_seed(pixel_index, iteration));
}

// Alpha compositing of (sigma, color, delta[, t]) triples per the volume
// rendering quadrature: alpha_i = 1 - exp(-sigma_i * delta_i), weight_i =
// alpha_i * prod_{j<i}(1 - alpha_j).
template <typename S>
inline CompositeResult<S> composite(const S* sigma, const Vec3<S>* color, const S* delta,
                                    const S* t, int n) {
  CompositeResult<S> out;
  out.weights.resize(n);
  S transmittance = S(1);
  S weight_sum = S(0);
  S depth_sum = S(0);
  for (int i = 0; i < n; ++i) {
    check(std::isfinite(static_cast<double>(sigma[i])) && sigma[i] >= S(0),
          "composite needs finite non-negative density");
    check(delta[i] > S(0), "composite needs positive deltas");
    const S alpha = S(1) - std::exp(-sigma[i] * delta[i]);
    const S w = alpha * transmittance;
    out.weights[i] = w;
    out.color += w * color[i];
    weight_sum += w;
    if (t) depth_sum += w * t[i];
    transmittance *= (S(1) - alpha);
  }
  out.transmittance_remainder = transmittance;
  out.expected_depth = t ? depth_sum / std::max(weight_sum, S(1e-12)) : S(0);
  return out;
}

template <typename S>
inline CompositeResult<S> composite(const std::vector<S>& sigma,
                                    const std::vector<Vec3<S>>& color,
                                    const std::vector<S>& delta,
                                    const std::vector<S>* t = nullptr) {
  check(sigma.size() == color.size() && sigma.size() == delta.size(),
        "composite input length mismatch");
  return composite<S>(sigma.data(), color.data(), delta.data(),
                      t ? t->data() : nullptr, static_cast<int>(sigma.size()));
}

// Reverse-mode of the background-composited pixel color
//   C_final = sum_i w_i c_i + T_remainder * background
// with respect to per-sample sigma and color. Uses a suffix recurrence so no
// division by (1 - alpha) is needed; stable even for saturated samples.
template <typename S>
inline void composite_backward(const S* sigma, const Vec3<S>* color, const S* delta,
                               int n, const Vec3<S>& background, const Vec3<S>& grad_color,
                               S* d_sigma, Vec3<S>* d_color) {
  // B_i = sum over samples after i (background included) of alpha_j (c_j . g)
  // discounted by the transmittance accumulated strictly between i and j.
  S suffix = background.dot(grad_color);
  std::vector<S> b(n);
  for (int i = n - 1; i >= 0; --i) {
    b[i] = suffix;
    const S alpha = S(1) - std::exp(-sigma[i] * delta[i]);
    suffix = alpha * color[i].dot(grad_color) + (S(1) - alpha) * suffix;
  }
  S transmittance = S(1);
  for (int i = 0; i < n; ++i) {
    const S one_minus_alpha = std::exp(-sigma[i] * delta[i]);
    const S alpha = S(1) - one_minus_alpha;
    const S w = alpha * transmittance;
    d_color[i] = w * grad_color;
    d_sigma[i] = transmittance * delta[i] * one_minus_alpha *
                 (color[i].dot(grad_color) - b[i]);
    transmittance *= one_minus_alpha;
  }
}

struct MaskedSkip {};

// Per-ray AABB clip of the sampling interval. Returns false when the ray
// misses the encoder domain entirely (pixel shows pure background).
inline bool clip_sampling_interval(const Ray& ray, const RenderConfig& cfg, double& t0,
                                   double& t1) {
  t0 = cfg.near;
  t1 = cfg.far;
  if (!cfg.aabb.clip_ray(ray.origin, ray.direction, t0, t1)) return false;
  // Shrink a hair so sampled points stay strictly inside the domain.
  const double pad = 1e-6 * (t1 - t0);
  t0 += pad;
  t1 -= pad;
  return t1 > t0;
}

// Renders one ray through an arbitrary field functor
//   field(position, direction) -> (sigma, color).
// Used directly by tests and oracle fields; the trained model has a batched
// equivalent that must agree with this one.
template <typename FieldFn>
inline RenderResult render_pixel(const FieldFn& field, const Ray& ray,
                                 const RenderConfig& cfg) {
  double t0, t1;
  if (!clip_sampling_interval(ray, cfg, t0, t1)) {
    RenderResult empty;
    return empty;
  }
  const std::uint64_t seed = ray_jitter_seed(
      cfg.seed, ray.view_id,
      static_cast<std::uint64_t>(ray.pixel_y) * 100000 + static_cast<std::uint64_t>(ray.pixel_x),
      cfg.iteration);
  const auto samples = sample_ray(ray, t0, t1, cfg.n_samples, cfg.jitter, seed);
  std::vector<double> sigma(samples.size()), delta(samples.size()), ts(samples.size());
  std::vector<Vec3d> color(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto [s, c] = field(samples[i].position, ray.direction);
    sigma[i] = s;
    color[i] = c;
    delta[i] = samples[i].delta;
    ts[i] = samples[i].t;
  }
  return composite<double>(sigma, color, delta, &ts);
}

// Supervision-path render: masked rays yield no result at all, matching the
// restriction of the photometric ray set to pixels outside the boxes.
template <typename FieldFn>
inline std::optional<RenderResult> render_pixel_masked(const FieldFn& field,
                                                       const ViewRecord& view, int px,
                                                       int py, const RenderConfig& cfg) {
  Ray ray = generate_ray(view, px, py);
  if (ray.masked) return std::nullopt;
  return render_pixel(field, ray, cfg);
}

// Whole-frame render through the generic functor; background is composited
// against the transmittance remainder. Returns (color, expected-depth) maps.
template <typename FieldFn>
inline std::pair<ImageF, ImageF> render_image(const FieldFn& field, const CameraModel& camera,
                                              const Pose& pose, const RenderConfig& cfg,
                                              ThreadPool* pool = nullptr, int view_id = -1) {
  ImageF img(camera.width, camera.height, 3);
  ImageF depth(camera.width, camera.height, 1);
  auto render_rows = [&](int, std::size_t y_begin, std::size_t y_end) {
    for (std::size_t y = y_begin; y < y_end; ++y) {
      for (int x = 0; x < camera.width; ++x) {
        Ray ray;
        ray.origin = pose.translation;
        ray.direction = pose.pixel_direction(camera, static_cast<double>(x), static_cast<double>(y));
        ray.pixel_x = x;
        ray.pixel_y = static_cast<double>(y);
        ray.view_id = view_id;
        RenderResult res = render_pixel(field, ray, cfg);
        for (int c = 0; c < 3; ++c) {
          img.at(x, static_cast<int>(y), c) = static_cast<float>(
              res.color[c] + res.transmittance_remainder * cfg.background[c]);
        }
        depth.at(x, static_cast<int>(y), 0) = static_cast<float>(res.expected_depth);
      }
    }
  };
  if (pool) {
    pool->parallel_segments(camera.height, render_rows);
  } else {
    render_rows(0, 0, camera.height);
  }
  return {std::move(img), std::move(depth)};
}

}  // namespace iddr
