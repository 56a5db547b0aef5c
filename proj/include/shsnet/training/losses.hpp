#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "shsnet/autodiff/ops.hpp"
#include "shsnet/geometry/point_cloud.hpp"

namespace shsnet::training {

using ad::Tensor;
using ad::Var;

inline constexpr double kMinTauScale = 0.05 * 0.05;

struct LossWeights {
  double sin = 0.1;
  double sgn = 0.1;
  double mse = 0.5;
  double tau = 1.0;
  double oriented = 1.0;  // only used when the oriented normal is regressed directly
};

// |n x n_gt|, the sine of the angle between two unit vectors.
inline double loss_sin(const Vec3& n, const Vec3& gt) { return n.cross(gt).norm(); }

// Binary cross entropy of sigmoid(s) against the label, via softplus.
inline double loss_sgn(double s, bool label) { return ad::softplus_value(s) - (label ? s : 0.0); }

// (1/N) sum tau_i |n_i - gt_i|^2.
inline double loss_mse(std::span<const Vec3> pred, std::span<const Vec3> gt, std::span<const double> tau) {
  if (pred.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += tau[i] * (pred[i] - gt[i]).squaredNorm();
  return s / static_cast<double>(pred.size());
}

// Target gates from coplanarity with the ground-truth query normal:
//   tau_hat_i = exp(-(p_i . n)^2 / xi^2), xi = max(0.05^2, 0.3 sum (p_i . n)^2 / N).
inline std::vector<double> tau_targets(std::span<const Vec3> local_coords, const Vec3& gt_normal) {
  std::vector<double> proj(local_coords.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    proj[i] = local_coords[i].dot(gt_normal);
    acc += proj[i] * proj[i];
  }
  const double xi = std::max(kMinTauScale, 0.3 * acc / static_cast<double>(std::max<std::size_t>(proj.size(), 1)));
  std::vector<double> out(proj.size());
  for (std::size_t i = 0; i < proj.size(); ++i) out[i] = std::exp(-(proj[i] * proj[i]) / (xi * xi));
  return out;
}

inline double loss_tau(std::span<const double> tau, std::span<const Vec3> local_coords, const Vec3& gt_normal) {
  const auto target = tau_targets(local_coords, gt_normal);
  double s = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) s += (tau[i] - target[i]) * (tau[i] - target[i]);
  return tau.empty() ? 0.0 : s / static_cast<double>(tau.size());
}

inline double total_loss(double sin, double sgn, double mse, double tau, const LossWeights& w = {}) {
  return w.sin * sin + w.sgn * sgn + w.mse * mse + w.tau * tau;
}

// ---- batched, differentiable forms. Every term is averaged over the batch.

// n, gt: (B, 3).
inline Var loss_sin(Var n, Var gt) {
  Var c = ad::cross(n, gt);
  return ad::mean_all(ad::sqrt(ad::sum_reduce(ad::square(c), 1)));
}

// logits (B, 1), labels (B, 1) in {0, 1}.
inline Var loss_sgn(Var logits, Var labels) {
  return ad::mean_all(ad::sub(ad::softplus(logits), ad::mul(labels, logits)));
}

// pred, gt (B, N, 3); tau (B, N, 1).
inline Var loss_mse(Var pred, Var gt, Var tau) {
  Var err = ad::sum_reduce(ad::square(ad::sub(pred, gt)), 2);  // (B, N)
  return ad::mean_all(ad::mul(err, ad::reshape(tau, err.shape())));
}

// tau (B, N, 1); targets (B, N, 1) constant.
inline Var loss_tau(Var tau, Var targets) { return ad::mean_all(ad::square(ad::sub(tau, targets))); }

// Plain squared distance between oriented vectors (B, 3).
inline Var loss_oriented(Var n, Var gt) { return ad::mean_all(ad::sum_reduce(ad::square(ad::sub(n, gt)), 1)); }

}  // namespace shsnet::training
