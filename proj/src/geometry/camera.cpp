#include "egqn/geometry/camera.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <string>

namespace egqn::geometry {

Intrinsics Intrinsics::from_fov(int image_size, double fov_degrees) {
  if (image_size <= 0) throw GeometryError("image size must be positive");
  if (!(fov_degrees > 0.0 && fov_degrees < 180.0)) throw GeometryError("field of view must be in (0, 180)");
  const double focal = 0.5 * image_size / std::tan(0.5 * fov_degrees * std::numbers::pi / 180.0);
  Intrinsics k;
  k.focal_h = focal;
  k.focal_w = focal;
  k.center_h = 0.5 * image_size;
  k.center_w = 0.5 * image_size;
  k.image_h = image_size;
  k.image_w = image_size;
  return k;
}

Intrinsics Intrinsics::scaled_to(int grid_h, int grid_w) const {
  if (grid_h <= 0 || grid_w <= 0) throw GeometryError("grid size must be positive");
  const double sh = static_cast<double>(grid_h) / image_h;
  const double sw = static_cast<double>(grid_w) / image_w;
  Intrinsics k = *this;
  k.focal_h *= sh;
  k.center_h *= sh;
  k.focal_w *= sw;
  k.center_w *= sw;
  k.image_h = grid_h;
  k.image_w = grid_w;
  return k;
}

Eigen::Matrix3d Intrinsics::matrix() const {
  Eigen::Matrix3d k;
  // Row index h follows camera Y, column index w follows camera X.
  k << 0.0, focal_h, center_h,
       focal_w, 0.0, center_w,
       0.0, 0.0, 1.0;
  return k;
}

void Intrinsics::validate() const {
  if (!(focal_h > 0.0) || !(focal_w > 0.0) || !std::isfinite(focal_h) || !std::isfinite(focal_w)) {
    throw GeometryError("focal lengths must be positive and finite");
  }
  if (!std::isfinite(center_h) || !std::isfinite(center_w)) throw GeometryError("non-finite principal point");
  if (image_h <= 0 || image_w <= 0) throw GeometryError("image size must be positive");
}

Pose Pose::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                   const Eigen::Vector3d& world_up) {
  const Eigen::Vector3d forward = target - eye;
  if (forward.norm() < 1e-12) throw GeometryError("look_at: eye and target coincide");
  const Eigen::Vector3d f = forward.normalized();
  const Eigen::Vector3d right_raw = f.cross(world_up);
  if (right_raw.norm() < 1e-9) throw GeometryError("look_at: up vector parallel to view direction");
  const Eigen::Vector3d right = right_raw.normalized();
  const Eigen::Vector3d down = f.cross(right);
  Pose p;
  p.rotation.col(0) = right;
  p.rotation.col(1) = down;
  p.rotation.col(2) = f;
  p.translation = eye;
  return p;
}

Eigen::Vector3d Pose::to_camera(const Eigen::Vector3d& world) const {
  return rotation.transpose() * (world - translation);
}

void Pose::validate(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) throw GeometryError("pose has non-finite entries");
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > tol) throw GeometryError("rotation is not orthonormal (max deviation " + std::to_string(ortho) + ")");
  const double det = rotation.determinant();
  if (std::abs(det - 1.0) > tol) throw GeometryError("rotation determinant " + std::to_string(det) + " != 1");
}

PixelCoord project_point(const Eigen::Vector3d& world, const Pose& pose, const Intrinsics& intr) {
  const Eigen::Vector3d c = pose.to_camera(world);
  if (!(c.z() > 1e-9)) throw BehindCameraError("point has depth " + std::to_string(c.z()));
  return {intr.focal_h * c.y() / c.z() + intr.center_h, intr.focal_w * c.x() / c.z() + intr.center_w};
}

Ray pixel_ray(const PixelCoord& pixel, const Pose& pose, const Intrinsics& intr) {
  const Eigen::Vector3d cam((pixel.w - intr.center_w) / intr.focal_w,
                            (pixel.h - intr.center_h) / intr.focal_h, 1.0);
  return {pose.translation, (pose.rotation * cam).normalized()};
}

}  // namespace egqn::geometry
