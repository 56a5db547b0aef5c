#pragma once

#include <Eigen/Core>
#include <Eigen/QR>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "shsnet/classical/pca.hpp"
#include "shsnet/error.hpp"
#include "shsnet/geometry/patch.hpp"

namespace shsnet::classical {


inline std::size_t jet_coefficient_count(int order) {
  return static_cast<std::size_t>((order + 1) * (order + 2) / 2);
}

// Truncated bivariate height polynomial
//   z = sum_{k=0..n} sum_{j=0..k} alpha_{k-j,j} x^{k-j} y^j
// expressed in a rotated frame whose z axis is the initial normal estimate.
// Coefficients are in world units; alpha is ordered
// (a00, a10, a01, a20, a11, a02, ..., a0n).
struct JetCoefficients {
  int order = 1;
  Eigen::VectorXd alpha;
  Mat3 frame = Mat3::Identity();  // rows are the fitting axes: v_fit = frame * v_world

  double coefficient(int px, int py) const {
    const int k = px + py;
    return alpha[static_cast<Eigen::Index>(k * (k + 1) / 2 + py)];
  }

  double height(double x, double y) const {
    double z = 0.0;
    Eigen::Index idx = 0;
    for (int k = 0; k <= order; ++k) {
      for (int j = 0; j <= k; ++j) z += alpha[idx++] * std::pow(x, k - j) * std::pow(y, j);
    }
    return z;
  }
};

namespace detail {

inline void monomial_row(double x, double y, int order, Eigen::Ref<Eigen::RowVectorXd> row) {
  Eigen::Index idx = 0;
  for (int k = 0; k <= order; ++k) {
    for (int j = 0; j <= k; ++j) row[idx++] = std::pow(x, k - j) * std::pow(y, j);
  }
}

}  // namespace detail

// Least-squares jet over `offsets` (points relative to the expansion point)
// expressed in `frame`. `scale` divides coordinates before solving so the
// monomial columns have comparable size; coefficients are mapped back to
// unscaled units. Pivoted QR rather than normal equations: squaring the
// condition number costs too many digits for order 3 and 4.
inline JetCoefficients jet_fit_in_frame(std::span<const Vec3> offsets, int order, const Mat3& frame,
                                        double scale = 1.0) {
  if (order < 1) throw InvalidArgument("jet order must be >= 1");
  const std::size_t n_coef = jet_coefficient_count(order);
  if (offsets.size() < n_coef)
    throw RankDeficient("jet of order " + std::to_string(order) + " needs at least " + std::to_string(n_coef) +
                        " points");
  const double inv = 1.0 / scale;
  const auto rows = static_cast<Eigen::Index>(offsets.size());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> design(rows, static_cast<Eigen::Index>(n_coef));
  Eigen::VectorXd heights(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Vec3 local = frame * offsets[static_cast<std::size_t>(i)] * inv;
    detail::monomial_row(local.x(), local.y(), order, design.row(i));
    heights[i] = local.z();
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < static_cast<Eigen::Index>(n_coef)) throw RankDeficient("jet design matrix is rank deficient");
  Eigen::VectorXd alpha = qr.solve(heights);
  if (!alpha.allFinite()) throw RankDeficient("jet design matrix is rank deficient");

  // z/s = sum a' (x/s)^a (y/s)^b  =>  a = a' s^(1-a-b)
  Eigen::Index idx = 0;
  for (int k = 0; k <= order; ++k) {
    const double factor = std::pow(scale, 1 - k);
    for (int j = 0; j <= k; ++j) alpha[idx++] *= factor;
  }
  return JetCoefficients{order, std::move(alpha), frame};
}

// Rotation whose third row is the PCA normal of the points.
inline Mat3 pca_fitting_frame(std::span<const Vec3> points) {
  const auto pca = pca_frame(points);
  const Vec3 z = canonical_sign(pca.eigenvectors.col(0).normalized());
  Vec3 x = pca.eigenvectors.col(2).normalized();
  x = (x - x.dot(z) * z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 frame;
  frame.row(0) = x.transpose();
  frame.row(1) = y.transpose();
  frame.row(2) = z.transpose();
  return frame;
}

inline JetCoefficients jet_fit(const Patch& patch, int order) {
  const Mat3 frame = pca_fitting_frame(patch.local_coords);
  return jet_fit_in_frame(patch.offsets(), order, frame, patch.patch_radius);
}

// Normal of the fitted surface at the expansion point, rotated back to world
// coordinates. Unoriented: the sign follows the fitting frame.
inline Vec3 jet_normal(const JetCoefficients& coef) {
  const double a10 = coef.coefficient(1, 0);
  const double a01 = coef.coefficient(0, 1);
  const Vec3 local = Vec3(-a10, -a01, 1.0) / std::sqrt(1.0 + a10 * a10 + a01 * a01);
  return coef.frame.transpose() * local;
}

}  // namespace shsnet::classical
