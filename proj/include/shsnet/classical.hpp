#pragma once

#include <cstddef>
#include <vector>

#include "shsnet/classical/jet.hpp"
#include "shsnet/classical/mst_orient.hpp"
#include "shsnet/classical/pca.hpp"
#include "shsnet/geometry/kd_index.hpp"
#include "shsnet/geometry/patch.hpp"

namespace shsnet::classical {

enum class Estimator { pca, jet };

// Unoriented per-point normals with canonical sign.
inline std::vector<Vec3> estimate_normals(const PointCloud& cloud, Estimator method, std::size_t k,
                                          int jet_order = 2) {
  const KdIndex index(cloud);
  std::vector<Vec3> normals(cloud.size());
  for (std::size_t q = 0; q < cloud.size(); ++q) {
    const Patch patch = extract_patch(cloud, index, q, k);
    normals[q] = method == Estimator::pca ? pca_normal(patch) : canonical_sign(jet_normal(jet_fit(patch, jet_order)));
  }
  return normals;
}

}  // namespace shsnet::classical
