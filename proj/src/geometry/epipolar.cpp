#include "egqn/geometry/epipolar.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace egqn::geometry {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& t) {
  Eigen::Matrix3d s;
  s << 0.0, -t.z(), t.y(),
       t.z(), 0.0, -t.x(),
       -t.y(), t.x(), 0.0;
  return s;
}

}  // namespace

Eigen::Matrix3d normalize_fundamental(const Eigen::Matrix3d& m) {
  const double norm = m.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateGeometryError("fundamental matrix has no scale");
  Eigen::Matrix3d out = m / norm;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (std::abs(out(r, c)) > 1e-12) {
        if (out(r, c) < 0.0) out = -out;
        return out;
      }
    }
  }
  return out;
}

FundamentalMatrix fundamental_matrix(const Pose& query, const Pose& context,
                                     const Intrinsics& query_intr, const Intrinsics& context_intr) {
  const Eigen::Vector3d baseline = query.translation - context.translation;
  if (!(baseline.norm() > 1e-9)) throw DegenerateGeometryError("query and context cameras share a center");
  const Eigen::Matrix3d rel_rotation = context.rotation.transpose() * query.rotation;
  const Eigen::Vector3d rel_translation = context.rotation.transpose() * baseline;
  const Eigen::Matrix3d essential = skew(rel_translation) * rel_rotation;
  const Eigen::Matrix3d kq_inv = query_intr.matrix().inverse();
  const Eigen::Matrix3d kk_inv = context_intr.matrix().inverse();
  return {normalize_fundamental(kk_inv.transpose() * essential * kq_inv)};
}

EpipolarLine epipolar_line(const Eigen::Matrix3d& f, const PixelCoord& query_pixel) {
  const Eigen::Vector3d l = f * Eigen::Vector3d(query_pixel.h, query_pixel.w, 1.0);
  const double norm_sq = l.x() * l.x() + l.y() * l.y();
  if (!(norm_sq >= 1e-18)) throw DegenerateLineError("query pixel maps to the context epipole");
  const double inv = 1.0 / std::sqrt(norm_sq);
  return {l.x() * inv, l.y() * inv, l.z() * inv};
}

EpipolarLine epipolar_line(const FundamentalMatrix& f, const PixelCoord& query_pixel) {
  return epipolar_line(f.m, query_pixel);
}

EpipolarIndexTable::EpipolarIndexTable(int grid_h, int grid_w)
    : grid_h_(grid_h), grid_w_(grid_w) {
  if (grid_h <= 0 || grid_w <= 0) throw GeometryError("index table grid must be positive");
  entries_.assign(static_cast<std::size_t>(grid_h) * grid_w * grid_w, kSentinel);
}

std::size_t EpipolarIndexTable::sentinel_count() const {
  return static_cast<std::size_t>(std::count(entries_.begin(), entries_.end(), kSentinel));
}

EpipolarIndexTable build_index_table(const Pose& query, const Pose& context,
                                     const Intrinsics& query_intr,
                                     const Intrinsics& context_intr) {
  if (query_intr.image_h != context_intr.image_h || query_intr.image_w != context_intr.image_w) {
    throw GeometryError("query and context grids differ");
  }
  const int gh = context_intr.image_h;
  const int gw = context_intr.image_w;
  const FundamentalMatrix f = fundamental_matrix(query, context, query_intr, context_intr);
  EpipolarIndexTable table(gh, gw);
  for (int p0 = 0; p0 < gh; ++p0) {
    for (int p1 = 0; p1 < gw; ++p1) {
      EpipolarLine line;
      try {
        line = epipolar_line(f, {p0 + 0.5, p1 + 0.5});
      } catch (const DegenerateLineError&) {
        continue;
      }
      if (std::abs(line.a) < EpipolarIndexTable::kMinRowCoefficient) continue;
      for (int q = 0; q < gw; ++q) {
        const double h = -(line.b * (q + 0.5) + line.c) / line.a;
        const double row = std::floor(h - 0.5);
        if (row >= 0.0 && row < gh) table.at(p0, p1, q) = static_cast<std::int32_t>(row);
      }
    }
  }
  return table;
}

EpipolarIndexTable build_index_table(const Pose& query, const Pose& context,
                                     const Intrinsics& grid_intr) {
  return build_index_table(query, context, grid_intr, grid_intr);
}

}  // namespace egqn::geometry
