#pragma once

#include <filesystem>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "iddr/bbox.hpp"
#include "iddr/camera.hpp"
#include "iddr/common.hpp"
#include "iddr/dataset.hpp"
#include "iddr/image.hpp"

namespace iddr {

// Flat-shaded analytic primitive. Boxes are axis-aligned.
struct ScenePrimitive {
  enum class Kind { kSphere, kBox };
  Kind kind = Kind::kSphere;
  Vec3d center = Vec3d::Zero();
  double radius = 0.1;             // spheres
  Vec3d half_extent{0.1, 0.1, 0.1};  // boxes
  Vec3<float> albedo{0.5f, 0.5f, 0.5f};
};

struct SceneHit {
  double t = 0;
  Vec3d normal = Vec3d::UnitZ();
  Vec3<float> albedo{0, 0, 0};
};

// Procedural scene with exact geometry: the clean-render oracle every trained
// model is judged against.
struct SyntheticScene {
  std::vector<ScenePrimitive> primitives;
  Vec3<float> background{1.f, 1.f, 1.f};
  Aabbd bounds;  // unit cube
  Vec3d light_dir = Vec3d(0.4, 0.25, 0.88).normalized();

  static SyntheticScene desk_default() {
    SyntheticScene scene;
    ScenePrimitive a;
    a.kind = ScenePrimitive::Kind::kSphere;
    a.center = Vec3d(0.35, 0.42, 0.38);
    a.radius = 0.18;
    a.albedo = {0.85f, 0.25f, 0.20f};
    ScenePrimitive b = a;
    b.center = Vec3d(0.66, 0.60, 0.32);
    b.radius = 0.15;
    b.albedo = {0.20f, 0.70f, 0.30f};
    ScenePrimitive c = a;
    c.center = Vec3d(0.52, 0.33, 0.62);
    c.radius = 0.12;
    c.albedo = {0.25f, 0.35f, 0.85f};
    ScenePrimitive table;
    table.kind = ScenePrimitive::Kind::kBox;
    table.center = Vec3d(0.5, 0.5, 0.11);
    table.half_extent = Vec3d(0.30, 0.30, 0.09);
    table.albedo = {0.75f, 0.70f, 0.58f};
    scene.primitives = {a, b, c, table};
    return scene;
  }

  // Nearest positive intersection along o + t*d.
  bool intersect(const Vec3d& o, const Vec3d& d, SceneHit& hit) const {
    bool found = false;
    for (const ScenePrimitive& prim : primitives) {
      double t;
      Vec3d normal;
      bool ok = prim.kind == ScenePrimitive::Kind::kSphere
                    ? intersect_sphere(prim, o, d, t, normal)
                    : intersect_box(prim, o, d, t, normal);
      if (ok && (!found || t < hit.t)) {
        hit.t = t;
        hit.normal = normal;
        hit.albedo = prim.albedo;
        found = true;
      }
    }
    return found;
  }

  Vec3<float> shade(const SceneHit& hit) const {
    const double lambert = 0.35 + 0.65 * std::max(0.0, hit.normal.dot(light_dir));
    return hit.albedo * static_cast<float>(lambert);
  }

 private:
  static bool intersect_sphere(const ScenePrimitive& prim, const Vec3d& o, const Vec3d& d,
                               double& t, Vec3d& normal) {
    const Vec3d oc = o - prim.center;
    const double b = oc.dot(d);
    const double c = oc.squaredNorm() - prim.radius * prim.radius;
    const double disc = b * b - c;
    if (disc < 0) return false;
    const double sq = std::sqrt(disc);
    double root = -b - sq;
    if (root <= 1e-9) root = -b + sq;
    if (root <= 1e-9) return false;
    t = root;
    normal = (o + t * d - prim.center).normalized();
    return true;
  }

  static bool intersect_box(const ScenePrimitive& prim, const Vec3d& o, const Vec3d& d,
                            double& t, Vec3d& normal) {
    Aabbd box;
    box.lo = prim.center - prim.half_extent;
    box.hi = prim.center + prim.half_extent;
    double t0 = 1e-9, t1 = std::numeric_limits<double>::max();
    if (!box.clip_ray(o, d, t0, t1)) return false;
    t = t0 > 1e-9 ? t0 : t1;
    if (t <= 1e-9) return false;
    const Vec3d p = o + t * d;
    // Face of the largest normalized excursion from the center.
    Vec3d rel = (p - prim.center).cwiseQuotient(prim.half_extent);
    int axis;
    rel.cwiseAbs().maxCoeff(&axis);
    normal = Vec3d::Zero();
    normal[axis] = rel[axis] > 0 ? 1.0 : -1.0;
    return true;
  }
};

// Analytic clean render: nearest hit, fixed-light Lambert shading, exact depth.
inline std::pair<ImageF, ImageF> render_oracle(const SyntheticScene& scene,
                                               const CameraModel& camera, const Pose& pose) {
  ImageF img(camera.width, camera.height, 3);
  ImageF depth(camera.width, camera.height, 1, 0.0f);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const Vec3d dir = pose.pixel_direction(camera, x, y);
      SceneHit hit;
      Vec3<float> color = scene.background;
      if (scene.intersect(pose.translation, dir, hit)) {
        color = scene.shade(hit);
        depth.at(x, y, 0) = static_cast<float>(hit.t);
      }
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
    }
  }
  return {std::move(img), std::move(depth)};
}

// Screen-space distractor sprites: transient, view-inconsistent clutter in
// the spirit of falling snow or thrown confetti. Placement is independent per
// view by construction.
struct DistractorSpec {
  enum class Kind { kSnowBlob, kConfettiQuad, kPetalEllipse };
  Kind kind = Kind::kSnowBlob;
  int count = 25;
  double min_size = 2.0;  // pixels
  double max_size = 6.0;  // pixels
  std::uint64_t seed = 0;

  static Kind parse_kind(const std::string& name) {
    if (name == "snow") return Kind::kSnowBlob;
    if (name == "confetti") return Kind::kConfettiQuad;
    if (name == "petal") return Kind::kPetalEllipse;
    throw UsageError("unknown distractor kind: " + name);
  }
  std::string kind_name() const {
    switch (kind) {
      case Kind::kSnowBlob: return "snow";
      case Kind::kConfettiQuad: return "confetti";
      case Kind::kPetalEllipse: return "petal";
    }
    return "snow";
  }
};

struct CorruptedView {
  ImageF image;                 // clean image with sprites composited over it
  std::vector<BBox> boxes;      // tight box per sprite
  Image<std::uint8_t> sprite_mask;  // exact painted pixels, for diagnostics
};

namespace detail {

inline Vec3<float> sprite_color(DistractorSpec::Kind kind, StreamRng& rng) {
  switch (kind) {
    case DistractorSpec::Kind::kSnowBlob: {
      const float v = static_cast<float>(rng.next_double(0.88, 1.0));
      return {v, v, std::min(1.0f, v + 0.02f)};
    }
    case DistractorSpec::Kind::kConfettiQuad: {
      const int hue = static_cast<int>(rng.next_below(6));
      static const float palette[6][3] = {{0.95f, 0.2f, 0.25f}, {0.2f, 0.55f, 0.95f},
                                          {0.98f, 0.8f, 0.15f}, {0.3f, 0.85f, 0.4f},
                                          {0.85f, 0.3f, 0.85f}, {0.98f, 0.55f, 0.2f}};
      return {palette[hue][0], palette[hue][1], palette[hue][2]};
    }
    case DistractorSpec::Kind::kPetalEllipse: {
      const float v = static_cast<float>(rng.next_double(0.0, 0.12));
      return {0.95f - v, 0.55f + v, 0.70f};
    }
  }
  return {1.f, 1.f, 1.f};
}

// Paints one sprite and returns its tight pixel bounds; false if it painted
// nothing (cannot happen for the supported size range, kept as a guard).
inline bool paint_sprite(ImageF& img, Image<std::uint8_t>& mask,
                         DistractorSpec::Kind kind, double cx, double cy, double size,
                         double angle, const Vec3<float>& color, int& x0, int& y0,
                         int& x1, int& y1) {
  const int lo_x = std::max(0, static_cast<int>(std::floor(cx - size - 2)));
  const int hi_x = std::min(img.width() - 1, static_cast<int>(std::ceil(cx + size + 2)));
  const int lo_y = std::max(0, static_cast<int>(std::floor(cy - size - 2)));
  const int hi_y = std::min(img.height() - 1, static_cast<int>(std::ceil(cy + size + 2)));
  const double ca = std::cos(angle), sa = std::sin(angle);
  x0 = img.width();
  y0 = img.height();
  x1 = -1;
  y1 = -1;
  for (int y = lo_y; y <= hi_y; ++y) {
    for (int x = lo_x; x <= hi_x; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double u = ca * dx + sa * dy;
      const double v = -sa * dx + ca * dy;
      bool inside = false;
      switch (kind) {
        case DistractorSpec::Kind::kSnowBlob:
          inside = dx * dx + dy * dy <= size * size;
          break;
        case DistractorSpec::Kind::kConfettiQuad:
          inside = std::abs(u) <= size && std::abs(v) <= 0.6 * size;
          break;
        case DistractorSpec::Kind::kPetalEllipse: {
          const double a = size, b = 0.5 * size;
          inside = (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
          break;
        }
      }
      if (!inside) continue;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
      mask.at(x, y, 0) = 1;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  return x1 >= x0;
}

}  // namespace detail

// Composites sprites over one clean view. The per-view stream is derived from
// (spec.seed, view_id); two views never share placements.
inline CorruptedView inject_distractors_view(const ImageF& clean, int view_id,
                                             const DistractorSpec& spec) {
  check(spec.count >= 0, "distractor count must be non-negative");
  check(spec.min_size > 0 && spec.min_size <= spec.max_size, "bad distractor size range");
  check(spec.max_size * 2 + 4 < std::min(clean.width(), clean.height()),
        "distractor size does not fit in the image");
  CorruptedView out;
  out.image = clean;
  out.sprite_mask = Image<std::uint8_t>(clean.width(), clean.height(), 1, 0);
  StreamRng rng(mix_seed(spec.seed, 0x73707269u + static_cast<std::uint64_t>(view_id)));
  for (int i = 0; i < spec.count; ++i) {
    const double size = rng.next_double(spec.min_size, spec.max_size);
    const double margin = size + 2;
    const double cx = rng.next_double(margin, clean.width() - margin);
    const double cy = rng.next_double(margin, clean.height() - margin);
    const double angle = rng.next_double(0, kPi);
    const Vec3<float> color = detail::sprite_color(spec.kind, rng);
    int x0, y0, x1, y1;
    if (!detail::paint_sprite(out.image, out.sprite_mask, spec.kind, cx, cy, size, angle,
                              color, x0, y0, x1, y1)) {
      continue;
    }
    BBox box;
    box.x0 = x0;
    box.y0 = y0;
    box.x1 = x1 + 1;  // half-open, so the box covers painted pixels exactly
    box.y1 = y1 + 1;
    box.class_id = 0;
    out.boxes.push_back(box);
  }
  return out;
}

// Ring of cameras at a fixed elevation, all looking at `target`, world Z up.
inline std::vector<std::pair<CameraModel, Pose>> make_rig(int n_views, double radius,
                                                          const Vec3d& target,
                                                          const CameraModel& camera,
                                                          double elevation = 0.45) {
  check(n_views >= 2, "rig needs at least two views");
  check(radius > 0, "rig radius must be positive");
  std::vector<std::pair<CameraModel, Pose>> rig;
  rig.reserve(n_views);
  for (int k = 0; k < n_views; ++k) {
    const double theta = 2.0 * kPi * k / n_views;
    const Vec3d eye = target + radius * Vec3d(std::cos(theta) * std::cos(elevation),
                                              std::sin(theta) * std::cos(elevation),
                                              std::sin(elevation));
    rig.emplace_back(camera, Pose::look_at(eye, target, Vec3d::UnitZ()));
  }
  return rig;
}

// Complete generation recipe; serialized verbatim into spec.json next to the
// generated data.
struct BenchmarkSpec {
  int views = 20;
  int resolution = 128;
  double fov_x_deg = 55.0;
  double rig_radius = 1.5;
  double rig_elevation = 0.45;
  DistractorSpec distractors;
  std::uint64_t seed = 7;

  nlohmann::json to_json() const {
    return {{"views", views},
            {"resolution", resolution},
            {"fov_x_deg", fov_x_deg},
            {"rig_radius", rig_radius},
            {"rig_elevation", rig_elevation},
            {"seed", seed},
            {"distractor",
             {{"kind", distractors.kind_name()},
              {"count", distractors.count},
              {"min_size", distractors.min_size},
              {"max_size", distractors.max_size},
              {"seed", distractors.seed}}}};
  }
};

// Writes the full dataset directory: transforms.json (frames point at the
// corrupted images used for training), clean/, corrupted/, labels/, masks/
// (both the gray-fill convention and the exact sprite masks), spec.json.
inline void write_benchmark(const std::string& out_dir, const BenchmarkSpec& bench,
                            const SyntheticScene& scene, bool force = false) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  if (fs::exists(root) && !fs::is_empty(root) && !force) {
    throw IoError("output directory exists and is not empty (use --force): " + out_dir);
  }
  fs::create_directories(root / "clean");
  fs::create_directories(root / "corrupted");
  fs::create_directories(root / "labels");
  fs::create_directories(root / "masks");

  CameraModel camera = CameraModel::from_fov_x(bench.fov_x_deg * kPi / 180.0,
                                               bench.resolution, bench.resolution);
  const Vec3d target(0.5, 0.5, 0.35);
  auto rig = make_rig(bench.views, bench.rig_radius, target, camera, bench.rig_elevation);

  DistractorSpec dspec = bench.distractors;
  dspec.seed = mix_seed(bench.seed, dspec.seed);

  nlohmann::json transforms;
  transforms["camera_angle_x"] = camera.fov_x();
  transforms["frames"] = nlohmann::json::array();

  for (int k = 0; k < bench.views; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03d", k);
    const auto& [cam, pose] = rig[k];
    auto [clean, depth] = render_oracle(scene, cam, pose);
    (void)depth;
    CorruptedView corrupted = inject_distractors_view(clean, k, dspec);

    write_png_rgb((root / "clean" / (std::string(name) + ".png")).string(), clean);
    write_png_rgb((root / "corrupted" / (std::string(name) + ".png")).string(),
                  corrupted.image);

    std::ofstream labels(root / "labels" / (std::string(name) + ".txt"));
    for (const BBox& box : corrupted.boxes) {
      const YoloLine y = bbox_to_yolo(box, cam.width, cam.height);
      labels << y.class_id << " " << std::setprecision(10) << y.cx << " " << y.cy << " "
             << y.w << " " << y.h << "\n";
    }
    labels.close();

    ViewRecord view;
    view.view_id = k;
    view.image = corrupted.image;
    view.camera = cam;
    view.pose = pose;
    view.boxes = corrupted.boxes;
    write_png_rgb((root / "masks" / (std::string(name) + "_gray.png")).string(),
                  emit_mask_image(view));
    ImageF sprite(cam.width, cam.height, 3);
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) {
        const float v = corrupted.sprite_mask.at(x, y, 0) ? 1.0f : 0.0f;
        for (int c = 0; c < 3; ++c) sprite.at(x, y, c) = v;
      }
    }
    write_png_rgb((root / "masks" / (std::string(name) + "_sprites.png")).string(), sprite);

    nlohmann::json frame;
    frame["file_path"] = std::string("corrupted/") + name + ".png";
    nlohmann::json matrix = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < 4; ++c) {
        if (r < 3 && c < 3) row.push_back(pose.rotation(r, c));
        else if (r < 3) row.push_back(pose.translation[r]);
        else row.push_back(c == 3 ? 1.0 : 0.0);
      }
      matrix.push_back(row);
    }
    frame["transform_matrix"] = matrix;
    transforms["frames"].push_back(frame);
  }

  std::ofstream tf(root / "transforms.json");
  tf << transforms.dump(2) << "\n";
  std::ofstream sf(root / "spec.json");
  sf << bench.to_json().dump(2) << "\n";
}

}  // namespace iddr
