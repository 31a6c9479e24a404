#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iddr/bbox.hpp"
#include "iddr/camera.hpp"
#include "iddr/image.hpp"

namespace iddr {

// One posed RGB image plus its distractor boxes; the unit of supervision.
struct ViewRecord {
  int view_id = 0;
  ImageF image;
  CameraModel camera;
  Pose pose;
  std::vector<BBox> boxes;
  std::string name;  // image stem, used to pair label and mask files
};

// Per-pixel gray fill used when emitting mask images.
inline constexpr float kMaskGray = 96.0f / 255.0f;

inline std::vector<BBox> parse_yolo_label_file(const std::string& path, int width,
                                               int height) {
  std::ifstream in(path);
  check_io(in.good(), "cannot open label file: " + path);
  std::vector<BBox> boxes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    YoloLine rec;
    if (!(ls >> rec.class_id)) {
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed label line");
    }
    if (!(ls >> rec.cx >> rec.cy >> rec.w >> rec.h)) {
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed label line");
    }
    std::string extra;
    if (ls >> extra) {
      throw IoError(path + ":" + std::to_string(line_no) + ": trailing tokens");
    }
    try {
      boxes.push_back(yolo_to_bbox(rec, width, height));
    } catch (const NumericError& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return boxes;
}

namespace detail {

inline std::string resolve_image_path(const std::filesystem::path& base,
                                      const std::string& file_path) {
  namespace fs = std::filesystem;
  fs::path p = fs::path(file_path).is_absolute() ? fs::path(file_path) : base / file_path;
  if (fs::exists(p)) return p.string();
  fs::path with_ext = p;
  with_ext += ".png";
  if (fs::exists(with_ext)) return with_ext.string();
  throw IoError("referenced image does not exist: " + p.string());
}

}  // namespace detail

// Loads a NeRF-style posed dataset: transforms.json with a shared horizontal
// field of view and per-frame 4x4 camera-to-world matrices, plus optional
// YOLO label files (one per image, same stem) in labels_dir. Frames without a
// label file get an empty box set. labels_dir may be empty to skip labels.
inline std::vector<ViewRecord> load_dataset(const std::string& transforms_path,
                                            const std::string& labels_dir) {
  namespace fs = std::filesystem;
  std::ifstream in(transforms_path);
  check_io(in.good(), "cannot open transforms file: " + transforms_path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse " + transforms_path + ": " + e.what());
  }
  check_io(doc.contains("camera_angle_x") && doc.contains("frames"),
           transforms_path + ": missing camera_angle_x or frames");

  const double fov_x = doc["camera_angle_x"].get<double>();
  const fs::path base = fs::path(transforms_path).parent_path();

  std::vector<ViewRecord> views;
  int view_id = 0;
  for (const auto& frame : doc["frames"]) {
    check_io(frame.contains("file_path") && frame.contains("transform_matrix"),
             transforms_path + ": frame missing file_path or transform_matrix");
    ViewRecord view;
    view.view_id = view_id++;

    const std::string img_path =
        detail::resolve_image_path(base, frame["file_path"].get<std::string>());
    view.image = read_png_rgb(img_path);
    view.name = fs::path(img_path).stem().string();
    view.camera = CameraModel::from_fov_x(fov_x, view.image.width(), view.image.height());
    view.camera.validate();

    const auto& m = frame["transform_matrix"];
    check_io(m.is_array() && m.size() == 4, "transform_matrix must be 4x4");
    for (int r = 0; r < 3; ++r) {
      check_io(m[r].is_array() && m[r].size() == 4, "transform_matrix must be 4x4");
      for (int c = 0; c < 3; ++c) view.pose.rotation(r, c) = m[r][c].get<double>();
      view.pose.translation[r] = m[r][3].get<double>();
    }
    view.pose.validate();

    if (!labels_dir.empty()) {
      fs::path label_path = fs::path(labels_dir) / (view.name + ".txt");
      if (fs::exists(label_path)) {
        view.boxes = parse_yolo_label_file(label_path.string(), view.image.width(),
                                           view.image.height());
      }
    }
    views.push_back(std::move(view));
  }
  return views;
}

// Copy of the view image with every pixel inside any box replaced by the
// (96,96,96) gray convention; pixels outside boxes are untouched.
inline ImageF emit_mask_image(const ViewRecord& view) {
  ImageF out = view.image;
  if (view.boxes.empty()) return out;
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (pixel_in_boxes(x, y, view.boxes)) {
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = kMaskGray;
      }
    }
  }
  return out;
}

}  // namespace iddr
