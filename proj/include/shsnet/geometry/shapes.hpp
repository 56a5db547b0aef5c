#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "shsnet/error.hpp"
#include "shsnet/geometry/point_cloud.hpp"
#include "shsnet/random.hpp"

namespace shsnet {

enum class ShapeKind { sphere, torus, box, plane };

inline constexpr double kTorusMajor = 1.0;
inline constexpr double kTorusMinor = 0.3;

inline std::optional<ShapeKind> parse_shape_kind(std::string_view s) {
  if (s == "sphere") return ShapeKind::sphere;
  if (s == "torus") return ShapeKind::torus;
  if (s == "box") return ShapeKind::box;
  if (s == "plane") return ShapeKind::plane;
  return std::nullopt;
}

inline const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::torus: return "torus";
    case ShapeKind::box: return "box";
    case ShapeKind::plane: return "plane";
  }
  return "?";
}

// Area-uniform samples with analytic outward unit normals:
//   sphere  unit radius at the origin
//   torus   major radius 1, minor radius 0.3, axis z
//   box     axis-aligned unit cube centered at the origin
//   plane   square [-1,1]^2 at z = 0, normal +z
inline PointCloud generate_shape(ShapeKind kind, std::size_t n, std::uint64_t seed) {
  if (n < 10) throw InvalidArgument("shape generation needs at least 10 points");
  Rng rng = make_rng(seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  points.reserve(n);
  normals.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case ShapeKind::sphere: {
        const double z = 2.0 * unit(rng) - 1.0;
        const double phi = two_pi * unit(rng);
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        Vec3 p(rho * std::cos(phi), rho * std::sin(phi), z);
        points.push_back(p);
        normals.push_back(p.normalized());
        break;
      }
      case ShapeKind::torus: {
        const double u = two_pi * unit(rng);
        double v = 0.0;
        // Area element is proportional to (R + r cos v).
        do {
          v = two_pi * unit(rng);
        } while (unit(rng) * (kTorusMajor + kTorusMinor) > kTorusMajor + kTorusMinor * std::cos(v));
        const double ring = kTorusMajor + kTorusMinor * std::cos(v);
        points.emplace_back(ring * std::cos(u), ring * std::sin(u), kTorusMinor * std::sin(v));
        normals.emplace_back(std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v));
        break;
      }
      case ShapeKind::box: {
        const int face = std::min(5, static_cast<int>(unit(rng) * 6.0));
        const int axis = face / 2;
        const double side = (face % 2 == 0) ? 0.5 : -0.5;
        Vec3 p;
        Vec3 nrm = Vec3::Zero();
        p[axis] = side;
        p[(axis + 1) % 3] = unit(rng) - 0.5;
        p[(axis + 2) % 3] = unit(rng) - 0.5;
        nrm[axis] = side > 0 ? 1.0 : -1.0;
        points.push_back(p);
        normals.push_back(nrm);
        break;
      }
      case ShapeKind::plane: {
        points.emplace_back(2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0, 0.0);
        normals.emplace_back(0.0, 0.0, 1.0);
        break;
      }
    }
  }
  return PointCloud(std::move(points), std::move(normals));
}

// Isotropic Gaussian displacement with per-axis standard deviation
// level * bbox_diagonal. Normals keep describing the clean surface.
inline PointCloud add_noise(const PointCloud& cloud, double level, std::uint64_t seed) {
  if (!(level >= 0.0)) throw InvalidArgument("noise level must be non-negative");
  if (level == 0.0) return cloud;
  Rng rng = make_rng(seed, 2);
  std::normal_distribution<double> gauss(0.0, level * cloud.bbox_diagonal());
  std::vector<Vec3> points = cloud.points();
  for (auto& p : points) {
    for (int c = 0; c < 3; ++c) p[c] += gauss(rng);
  }
  if (cloud.has_normals()) return PointCloud(std::move(points), cloud.normals());
  return PointCloud(std::move(points));
}

enum class DensityVariant { none, stripe, gradient };

inline std::optional<DensityVariant> parse_density(std::string_view s) {
  if (s == "none") return DensityVariant::none;
  if (s == "stripe") return DensityVariant::stripe;
  if (s == "gradient") return DensityVariant::gradient;
  return std::nullopt;
}

// Uneven resampling along the x axis.
//   stripe    slabs covering the first 30% of every fifth of the x extent keep 20% of their points
//   gradient  keep probability falls linearly from 1 at min x to 0.1 at max x
inline PointCloud apply_density(const PointCloud& cloud, DensityVariant variant, std::uint64_t seed) {
  if (variant == DensityVariant::none || cloud.empty()) return cloud;
  double lo = cloud.point(0).x();
  double hi = lo;
  for (const auto& p : cloud.points()) {
    lo = std::min(lo, p.x());
    hi = std::max(hi, p.x());
  }
  const double extent = std::max(hi - lo, 1e-300);
  Rng rng = make_rng(seed, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<bool> keep(cloud.size(), true);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double t = (cloud.point(i).x() - lo) / extent;
    double keep_prob = 1.0;
    if (variant == DensityVariant::stripe) {
      const double phase = std::fmod(t * 5.0, 1.0);
      keep_prob = phase < 0.3 ? 0.2 : 1.0;
    } else {
      keep_prob = 1.0 - 0.9 * t;
    }
    keep[i] = unit(rng) < keep_prob;
  }
  return cloud.subset(keep);
}

}  // namespace shsnet
