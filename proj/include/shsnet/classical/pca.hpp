#pragma once

#include <Eigen/Eigenvalues>

#include <cmath>
#include <span>

#include "shsnet/error.hpp"
#include "shsnet/geometry/patch.hpp"

namespace shsnet::classical {

// Flips v so that its z component (or first component above 1e-12 in
// magnitude, scanning z, x, y) is positive.
inline Vec3 canonical_sign(const Vec3& v) {
  for (int c : {2, 0, 1}) {
    if (std::abs(v[c]) > 1e-12) return v[c] > 0 ? v : Vec3(-v);
  }
  return v;
}

struct PcaFrame {
  Vec3 eigenvalues;   // ascending
  Mat3 eigenvectors;  // columns match eigenvalues
};

inline PcaFrame pca_frame(std::span<const Vec3> points) {
  if (points.size() < 3) throw RankDeficient("PCA needs at least 3 points");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  if (solver.info() != Eigen::Success) throw RankDeficient("covariance eigendecomposition failed");
  if (solver.eigenvalues()[0] < 1e-12 && solver.eigenvalues()[1] < 1e-12)
    throw RankDeficient("neighborhood is collinear or coincident");
  return PcaFrame{solver.eigenvalues(), solver.eigenvectors()};
}

// Unoriented normal: smallest-variance direction of the neighbor covariance.
inline Vec3 pca_normal(std::span<const Vec3> points) {
  const auto frame = pca_frame(points);
  return canonical_sign(frame.eigenvectors.col(0).normalized());
}

inline Vec3 pca_normal(const Patch& patch) { return pca_normal(std::span<const Vec3>(patch.local_coords)); }

}  // namespace shsnet::classical
