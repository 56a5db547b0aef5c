#pragma once

#include <cstddef>
#include <vector>

#include "shsnet/error.hpp"
#include "shsnet/geometry/kd_index.hpp"
#include "shsnet/geometry/point_cloud.hpp"

namespace shsnet {

// A query point with its k nearest neighbors (query first), translated so the
// query sits at the origin and scaled by 1/patch_radius.
struct Patch {
  std::size_t query_index = 0;
  std::vector<std::size_t> neighbor_indices;
  std::vector<Vec3> local_coords;
  double patch_radius = 0.0;
  Vec3 query_point = Vec3::Zero();

  std::size_t size() const noexcept { return local_coords.size(); }

  Vec3 to_world(std::size_t row) const { return local_coords[row] * patch_radius + query_point; }

  // Neighbor offsets from the query in world units (not scaled).
  std::vector<Vec3> offsets() const {
    std::vector<Vec3> out;
    out.reserve(local_coords.size());
    for (const auto& p : local_coords) out.push_back(p * patch_radius);
    return out;
  }
};

inline Patch extract_patch(const PointCloud& cloud, const KdIndex& index, std::size_t q, std::size_t k) {
  if (q >= cloud.size()) throw InvalidArgument("query index out of range");
  if (k == 0 || k > cloud.size()) throw InvalidArgument("patch size must be in [1, N]");
  const Vec3& center = cloud.point(q);
  auto nn = index.knn(center, k);
  // Coincident duplicates may outrank q by index; q itself always goes first.
  for (std::size_t i = 0; i < nn.size(); ++i) {
    if (nn[i].index == q) {
      Neighbor self = nn[i];
      nn.erase(nn.begin() + static_cast<std::ptrdiff_t>(i));
      nn.insert(nn.begin(), self);
      break;
    }
  }
  if (nn.front().index != q) {
    nn.pop_back();
    nn.insert(nn.begin(), Neighbor{q, 0.0});
  }

  Patch patch;
  patch.query_index = q;
  patch.query_point = center;
  patch.patch_radius = nn.back().distance;
  for (const auto& n : nn) patch.patch_radius = std::max(patch.patch_radius, n.distance);
  if (patch.patch_radius < 1e-12) throw DegeneratePatch();
  const double inv = 1.0 / patch.patch_radius;
  patch.neighbor_indices.reserve(k);
  patch.local_coords.reserve(k);
  for (const auto& n : nn) {
    patch.neighbor_indices.push_back(n.index);
    patch.local_coords.push_back((cloud.point(n.index) - center) * inv);
  }
  return patch;
}

}  // namespace shsnet
