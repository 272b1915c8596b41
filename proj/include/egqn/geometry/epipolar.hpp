#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

#include "egqn/geometry/camera.hpp"

namespace egqn::geometry {

class DegenerateGeometryError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

class DegenerateLineError : public GeometryError {
 public:
  using GeometryError::GeometryError;
};

// Maps homogeneous query pixels (h, w, 1) to lines in the context image.
// Unit Frobenius norm; the first entry (row-major) with magnitude above 1e-12
// is positive.
struct FundamentalMatrix {
  Eigen::Matrix3d m;
};

// a*h + b*w + c = 0 with a^2 + b^2 = 1.
struct EpipolarLine {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double evaluate(const PixelCoord& p) const { return a * p.h + b * p.w + c; }
};

Eigen::Matrix3d normalize_fundamental(const Eigen::Matrix3d& m);

// F = K_k^{-T} [t]_x R K_q^{-1}, with (R, t) taking query-camera coordinates
// to context-camera coordinates. Throws DegenerateGeometryError when the two
// camera centers coincide (baseline norm <= 1e-9).
FundamentalMatrix fundamental_matrix(const Pose& query, const Pose& context,
                                     const Intrinsics& query_intr, const Intrinsics& context_intr);

// Line l' = F (h, w, 1)^T in the context image for a continuous query pixel.
// Throws DegenerateLineError when a^2 + b^2 < 1e-18 (the pixel images the
// context camera center).
EpipolarLine epipolar_line(const FundamentalMatrix& f, const PixelCoord& query_pixel);
EpipolarLine epipolar_line(const Eigen::Matrix3d& f, const PixelCoord& query_pixel);

// For every query cell (p0, p1) and context column q, the context row whose
// features feed e[p0][p1][q], or kSentinel.
class EpipolarIndexTable {
 public:
  static constexpr std::int32_t kSentinel = -1;
  // Lines with |a| below this are treated as having no row parameterization.
  static constexpr double kMinRowCoefficient = 1e-6;

  EpipolarIndexTable() = default;
  EpipolarIndexTable(int grid_h, int grid_w);

  int grid_h() const { return grid_h_; }
  int grid_w() const { return grid_w_; }
  std::size_t size() const { return entries_.size(); }

  std::int32_t at(int p0, int p1, int q) const {
    return entries_[(static_cast<std::size_t>(p0) * grid_w_ + p1) * grid_w_ + q];
  }
  std::int32_t& at(int p0, int p1, int q) {
    return entries_[(static_cast<std::size_t>(p0) * grid_w_ + p1) * grid_w_ + q];
  }
  std::span<const std::int32_t> entries() const { return entries_; }
  std::size_t sentinel_count() const;

  bool operator==(const EpipolarIndexTable&) const = default;

 private:
  int grid_h_ = 0;
  int grid_w_ = 0;
  std::vector<std::int32_t> entries_;
};

// Evaluates each query cell's epipolar line at context column centers
// (q + 0.5) and stores floor(h - 0.5), the row index whose center lies at or
// above the line. Rows outside [0, grid_h), near-horizontal-parameterization
// lines (|a| < kMinRowCoefficient) and query cells that image the context
// camera center all map to kSentinel. Intrinsics must already describe the
// grid_h x grid_w raster.
EpipolarIndexTable build_index_table(const Pose& query, const Pose& context,
                                     const Intrinsics& query_intr,
                                     const Intrinsics& context_intr);
EpipolarIndexTable build_index_table(const Pose& query, const Pose& context,
                                     const Intrinsics& grid_intr);

}  // namespace egqn::geometry
