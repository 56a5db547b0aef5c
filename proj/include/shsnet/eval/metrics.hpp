#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "shsnet/error.hpp"
#include "shsnet/geometry/point_cloud.hpp"

namespace shsnet::eval {

inline double rad_to_deg(double r) { return r * 180.0 / std::numbers::pi; }

// Angle between a prediction and the ground truth in degrees. Unoriented
// errors ignore the sign, so they never exceed 90.
inline double angle_error(const Vec3& pred, const Vec3& gt, bool oriented) {
  const double d = pred.dot(gt);
  return oriented ? rad_to_deg(std::acos(std::clamp(d, -1.0, 1.0))) : rad_to_deg(std::acos(std::clamp(std::abs(d), 0.0, 1.0)));
}

inline std::vector<double> angle_errors(std::span<const Vec3> pred, std::span<const Vec3> gt, bool oriented) {
  if (pred.size() != gt.size()) throw InvalidArgument("prediction and ground-truth counts differ");
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = angle_error(pred[i], gt[i], oriented);
  return out;
}

inline double rmse(std::span<const double> errors) {
  if (errors.empty()) throw EmptyInput();
  double s = 0.0;
  for (double e : errors) s += e * e;
  return std::sqrt(s / static_cast<double>(errors.size()));
}

struct PgpCurve {
  std::vector<double> thresholds;  // degrees, uniform from 0 to max
  std::vector<double> fractions;   // share of errors <= threshold
  double auc = 0.0;                // trapezoid area / max threshold
};

// Percentage of good points over thresholds 0, max/steps, ..., max.
inline PgpCurve pgp_auc(std::span<const double> errors, double max_threshold = 90.0, std::size_t steps = 90) {
  if (errors.empty()) throw EmptyInput();
  if (!(max_threshold > 0.0) || steps == 0) throw InvalidArgument("PGP grid needs a positive range and step count");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  PgpCurve c;
  const double n = static_cast<double>(sorted.size());
  const double dt = max_threshold / static_cast<double>(steps);
  for (std::size_t i = 0; i <= steps; ++i) {
    const double t = i == steps ? max_threshold : dt * static_cast<double>(i);
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    c.thresholds.push_back(t);
    c.fractions.push_back(static_cast<double>(count) / n);
  }
  double area = 0.0;
  for (std::size_t i = 1; i <= steps; ++i)
    area += 0.5 * (c.fractions[i] + c.fractions[i - 1]) * (c.thresholds[i] - c.thresholds[i - 1]);
  c.auc = area / max_threshold;
  return c;
}

// Negates every prediction when strictly more than half point against the
// ground truth. Used for classical baselines, whose global sign is arbitrary.
inline std::vector<Vec3> majority_flip(std::span<const Vec3> pred, std::span<const Vec3> gt, bool* flipped = nullptr) {
  if (pred.size() != gt.size()) throw InvalidArgument("prediction and ground-truth counts differ");
  std::size_t inward = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i].dot(gt[i]) < 0.0) ++inward;
  const bool flip = 2 * inward > pred.size();
  if (flipped) *flipped = flip;
  std::vector<Vec3> out(pred.begin(), pred.end());
  if (flip)
    for (auto& v : out) v = -v;
  return out;
}

// Share of predictions on the same side as the ground truth.
inline double sign_accuracy(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  if (pred.empty()) throw EmptyInput();
  if (pred.size() != gt.size()) throw InvalidArgument("prediction and ground-truth counts differ");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i].dot(gt[i]) > 0.0) ++ok;
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

struct EvalReport {
  double rmse_oriented = 0.0;
  double rmse_unoriented = 0.0;
  double sign_accuracy = 0.0;
  PgpCurve pgp_unoriented;  // 0..90 degrees
  PgpCurve pgp_oriented;    // 0..180 degrees
  std::vector<double> errors_oriented;
  std::vector<double> errors_unoriented;
};

inline EvalReport evaluate(std::span<const Vec3> pred, std::span<const Vec3> gt) {
  if (pred.empty()) throw EmptyInput();
  EvalReport r;
  r.errors_oriented = angle_errors(pred, gt, true);
  r.errors_unoriented = angle_errors(pred, gt, false);
  r.rmse_oriented = rmse(r.errors_oriented);
  r.rmse_unoriented = rmse(r.errors_unoriented);
  r.sign_accuracy = eval::sign_accuracy(pred, gt);
  r.pgp_unoriented = pgp_auc(r.errors_unoriented, 90.0, 90);
  r.pgp_oriented = pgp_auc(r.errors_oriented, 180.0, 180);
  return r;
}

// Averages over several shapes: pooled over all points, and the mean of
// per-shape RMSE values.
struct Summary {
  double pooled_oriented = 0.0;
  double pooled_unoriented = 0.0;
  double shape_mean_oriented = 0.0;
  double shape_mean_unoriented = 0.0;
};

inline Summary summarize(std::span<const EvalReport> reports) {
  if (reports.empty()) throw EmptyInput();
  std::vector<double> all_o;
  std::vector<double> all_u;
  Summary s;
  for (const auto& r : reports) {
    all_o.insert(all_o.end(), r.errors_oriented.begin(), r.errors_oriented.end());
    all_u.insert(all_u.end(), r.errors_unoriented.begin(), r.errors_unoriented.end());
    s.shape_mean_oriented += r.rmse_oriented;
    s.shape_mean_unoriented += r.rmse_unoriented;
  }
  s.pooled_oriented = rmse(all_o);
  s.pooled_unoriented = rmse(all_u);
  s.shape_mean_oriented /= static_cast<double>(reports.size());
  s.shape_mean_unoriented /= static_cast<double>(reports.size());
  return s;
}

}  // namespace shsnet::eval
