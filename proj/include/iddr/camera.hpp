#pragma once

#include "iddr/common.hpp"

namespace iddr {

// Pinhole intrinsics. Image x runs right, y runs down, and a pixel's sample
// point is its center (x+0.5, y+0.5).
struct CameraModel {
  double focal_length = 0;            // pixels, shared by both axes
  double principal_x = 0;             // pixels
  double principal_y = 0;             // pixels
  int width = 0;
  int height = 0;

  void validate() const {
    check(focal_length > 0, "camera focal length must be positive");
    check(width >= 1 && height >= 1, "camera size must be at least 1x1");
    check(principal_x >= 0 && principal_x < width, "principal point x out of bounds");
    check(principal_y >= 0 && principal_y < height, "principal point y out of bounds");
  }

  static CameraModel from_fov_x(double camera_angle_x, int width, int height) {
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    cam.focal_length = 0.5 * width / std::tan(0.5 * camera_angle_x);
    cam.principal_x = 0.5 * width;
    cam.principal_y = 0.5 * height;
    return cam;
  }

  double fov_x() const { return 2.0 * std::atan2(0.5 * width, focal_length); }
};

// Camera-to-world rigid transform with the OpenGL-style axis convention used
// by NeRF pose files: camera +X right, +Y up, -Z viewing direction.
struct Pose {
  Mat3d rotation = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();

  void validate(double tol = 1e-6) const {
    Mat3d gram = rotation.transpose() * rotation;
    check((gram - Mat3d::Identity()).cwiseAbs().maxCoeff() <= tol,
          "pose rotation is not orthonormal");
    check(std::abs(rotation.determinant() - 1.0) <= tol,
          "pose rotation must have determinant +1");
  }

  Vec3d optical_axis() const { return -rotation.col(2); }

  // Direction in world space of the ray through pixel center (px+0.5, py+0.5).
  Vec3d pixel_direction(const CameraModel& cam, double px, double py) const {
    Vec3d d_cam((px + 0.5 - cam.principal_x) / cam.focal_length,
                -(py + 0.5 - cam.principal_y) / cam.focal_length, -1.0);
    return (rotation * d_cam).normalized();
  }

  // Projects a world point onto the image. Returns false when the point is
  // behind the camera. The returned pixel coordinates are in the same
  // pixel-index frame as pixel_direction (so projecting a point on the ray of
  // pixel (x, y) yields exactly (x, y)).
  bool project(const CameraModel& cam, const Vec3d& world, double& px, double& py) const {
    Vec3d q = rotation.transpose() * (world - translation);
    if (q.z() >= -1e-12) return false;
    const double inv_depth = 1.0 / -q.z();
    px = cam.principal_x + cam.focal_length * q.x() * inv_depth - 0.5;
    py = cam.principal_y - cam.focal_length * q.y() * inv_depth - 0.5;
    return true;
  }

  // Builds a pose at `eye` whose -Z axis points at `target`; `up` fixes roll.
  static Pose look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& up) {
    Vec3d forward = (target - eye).normalized();
    Vec3d right = forward.cross(up).normalized();
    check(right.allFinite() && right.norm() > 0.5, "look_at: up parallel to view direction");
    Vec3d cam_up = right.cross(forward);
    Pose pose;
    pose.rotation.col(0) = right;
    pose.rotation.col(1) = cam_up;
    pose.rotation.col(2) = -forward;
    pose.translation = eye;
    return pose;
  }
};

}  // namespace iddr
