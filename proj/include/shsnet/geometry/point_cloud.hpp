#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "shsnet/error.hpp"

namespace shsnet {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline double bbox_diagonal_of(const std::vector<Vec3>& points) {
  if (points.empty()) return 0.0;
  Vec3 lo = points.front();
  Vec3 hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

// Positions plus optional ground-truth oriented normals. Immutable after
// construction, so it can be shared across threads.
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(std::vector<Vec3> points, std::optional<std::vector<Vec3>> normals = std::nullopt)
      : points_(std::move(points)), normals_(std::move(normals)) {
    if (normals_) {
      if (normals_->size() != points_.size())
        throw InvalidArgument("normals (" + std::to_string(normals_->size()) + ") and points (" +
                              std::to_string(points_.size()) + ") differ in length");
      for (const auto& n : *normals_) {
        if (std::abs(n.norm() - 1.0) > 1e-6) throw InvalidArgument("ground-truth normal is not unit length");
      }
    }
    bbox_diagonal_ = bbox_diagonal_of(points_);
  }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const std::vector<Vec3>& points() const noexcept { return points_; }
  const Vec3& point(std::size_t i) const { return points_[i]; }
  bool has_normals() const noexcept { return normals_.has_value(); }
  const std::vector<Vec3>& normals() const {
    if (!normals_) throw InvalidArgument("point cloud carries no normals");
    return *normals_;
  }
  double bbox_diagonal() const noexcept { return bbox_diagonal_; }

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const auto& p : points_) c += p;
    return points_.empty() ? c : Vec3(c / static_cast<double>(points_.size()));
  }

  PointCloud with_normals(std::vector<Vec3> normals) const { return PointCloud(points_, std::move(normals)); }

  // Keeps the points whose mask entry is true, preserving order.
  PointCloud subset(const std::vector<bool>& keep) const {
    std::vector<Vec3> pts;
    std::vector<Vec3> nrm;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!keep[i]) continue;
      pts.push_back(points_[i]);
      if (normals_) nrm.push_back((*normals_)[i]);
    }
    if (normals_) return PointCloud(std::move(pts), std::move(nrm));
    return PointCloud(std::move(pts));
  }

 private:
  std::vector<Vec3> points_;
  std::optional<std::vector<Vec3>> normals_;
  double bbox_diagonal_ = 0.0;
};

}  // namespace shsnet
