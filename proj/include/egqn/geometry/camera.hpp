#pragma once

#include <Eigen/Core>

#include <stdexcept>

namespace egqn::geometry {

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BehindCameraError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

// Pixel coordinates are (h, w) = (row downward, column rightward) on a
// continuous grid where pixel (i, j) covers [i, i+1) x [j, j+1); its center is
// (i + 0.5, j + 0.5).
struct PixelCoord {
  double h = 0.0;
  double w = 0.0;
};

struct Intrinsics {
  double focal_h = 1.0;
  double focal_w = 1.0;
  double center_h = 0.0;
  double center_w = 0.0;
  int image_h = 1;
  int image_w = 1;

  // Square pixels, principal point at the image center.
  static Intrinsics from_fov(int image_size, double fov_degrees);

  // Same field of view on a grid_h x grid_w raster.
  Intrinsics scaled_to(int grid_h, int grid_w) const;

  // K such that K * (X, Y, Z)^T = Z * (h, w, 1)^T for a camera-frame point.
  Eigen::Matrix3d matrix() const;

  void validate() const;
};

// Camera-to-world rigid transform. Camera frame: X right, Y down, Z forward.
// `translation` is the camera center in world coordinates.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  // Camera at `eye` looking at `target`; image "up" follows `world_up`.
  static Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                      const Eigen::Vector3d& world_up);

  Eigen::Vector3d forward() const { return rotation.col(2); }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const;

  // Throws GeometryError unless R^T R = I and det R = +1 within `tol`.
  void validate(double tol = 1e-6) const;
};

// Throws BehindCameraError when the camera-frame depth is <= 1e-9.
PixelCoord project_point(const Eigen::Vector3d& world, const Pose& pose, const Intrinsics& intr);

// World-space ray through a continuous pixel coordinate; direction unit length.
struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d direction;
};
Ray pixel_ray(const PixelCoord& pixel, const Pose& pose, const Intrinsics& intr);

}  // namespace egqn::geometry
