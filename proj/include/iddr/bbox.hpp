#pragma once

#include <vector>

#include "iddr/common.hpp"

namespace iddr {

// Axis-aligned detector box, upper-left and lower-right corners in pixels.
// Membership is half-open [x0,x1) x [y0,y1) so adjacent boxes tile without
// double-counting.
struct BBox {
  double x0 = 0;
  double y0 = 0;
  double x1 = 0;
  double y1 = 0;
  int class_id = 0;
  double confidence = 1.0;

  bool contains(double x, double y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }

  void validate() const {
    check(x0 < x1 && y0 < y1, "bounding box corners must be ordered");
    check(class_id >= 0, "bounding box class id must be non-negative");
    check(confidence >= 0.0 && confidence <= 1.0, "bounding box confidence out of [0,1]");
  }
};

inline bool pixel_in_boxes(double x, double y, const std::vector<BBox>& boxes) {
  for (const BBox& b : boxes) {
    if (b.contains(x, y)) return true;
  }
  return false;
}

// Normalized YOLO record: "class cx cy w h", all in [0,1].
struct YoloLine {
  int class_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;
};

// Converts a YOLO center-format record to pixel corners, clamped to the image.
// Detectors routinely emit boxes that poke past the border, so clamping is the
// load-time policy rather than rejection.
inline BBox yolo_to_bbox(const YoloLine& line, int image_width, int image_height) {
  check(line.cx >= 0.0 && line.cx <= 1.0 && line.cy >= 0.0 && line.cy <= 1.0,
        "YOLO center out of [0,1]");
  check(line.w > 0.0 && line.w <= 1.0 && line.h > 0.0 && line.h <= 1.0,
        "YOLO size out of (0,1]");
  check(line.class_id >= 0, "YOLO class id must be non-negative");
  BBox box;
  box.class_id = line.class_id;
  box.x0 = std::max(0.0, (line.cx - 0.5 * line.w) * image_width);
  box.x1 = std::min<double>(image_width, (line.cx + 0.5 * line.w) * image_width);
  box.y0 = std::max(0.0, (line.cy - 0.5 * line.h) * image_height);
  box.y1 = std::min<double>(image_height, (line.cy + 0.5 * line.h) * image_height);
  box.validate();
  return box;
}

inline YoloLine bbox_to_yolo(const BBox& box, int image_width, int image_height) {
  YoloLine line;
  line.class_id = box.class_id;
  line.cx = 0.5 * (box.x0 + box.x1) / image_width;
  line.cy = 0.5 * (box.y0 + box.y1) / image_height;
  line.w = (box.x1 - box.x0) / image_width;
  line.h = (box.y1 - box.y0) / image_height;
  return line;
}

}  // namespace iddr
