#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "shsnet/geometry/point_cloud.hpp"
#include "shsnet/model/config.hpp"
#include "shsnet/random.hpp"

namespace shsnet::model {

inline constexpr double kMinSampleWeight = 0.05;

// upsilon for a point at distance d when the farthest point is at d_max.
inline double gradient_weight(double d, double d_max) {
  if (d_max <= 0.0) return 1.0;
  return std::clamp(1.0 - 1.5 * d / d_max, kMinSampleWeight, 1.0);
}

// Unnormalized sampling weights of every cloud point around q. Points of the
// uniformly drawn random subset get weight 1; `in_random` marks them.
inline std::vector<double> sampling_weights(std::span<const Vec3> points, const Vec3& q, std::size_t global_size,
                                            double random_ratio, SamplingMode mode, Rng& rng,
                                            std::vector<char>* in_random = nullptr) {
  const std::size_t n = points.size();
  std::vector<double> dist(n);
  double d_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = (points[i] - q).norm();
    d_max = std::max(d_max, dist[i]);
  }
  std::vector<double> w(n, 1.0);
  std::vector<char> marked(n, 0);
  if (mode == SamplingMode::random_only) {
    std::fill(marked.begin(), marked.end(), 1);
  } else {
    for (std::size_t i = 0; i < n; ++i) w[i] = gradient_weight(dist[i], d_max);
    if (mode == SamplingMode::mixed) {
      const auto r = std::min(n, static_cast<std::size_t>(std::floor(static_cast<double>(global_size) * random_ratio)));
      // Partial Fisher-Yates: the first r slots become a uniform r-subset.
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      for (std::size_t i = 0; i < r; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
        marked[idx[i]] = 1;
        w[idx[i]] = 1.0;
      }
    }
  }
  if (in_random) *in_random = std::move(marked);
  return w;
}

// Weighted sampling without replacement (Efraimidis-Spirakis): each item gets
// key log(u)/w and the `count` largest keys win. With count = 1 item i is
// drawn with probability w_i / sum(w).
inline std::vector<std::size_t> weighted_sample(std::span<const double> weights, std::size_t count, Rng& rng) {
  const std::size_t n = weights.size();
  if (count >= n) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return all;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<double, std::size_t>> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    double r = u(rng);
    while (r <= 0.0) r = u(rng);
    keys[i] = {std::log(r) / weights[i], i};
  }
  std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = keys[i].second;
  return out;
}

// The global point set of a query: offsets p - q scaled by 1/bbox diagonal,
// ordered nearest first so encoder truncation keeps the closest points.
struct GlobalSet {
  std::vector<std::size_t> indices;
  std::vector<Vec3> coords;
  std::vector<double> distances;  // |coords[i]|
};

inline GlobalSet sample_global(const PointCloud& cloud, const Vec3& q, std::size_t global_size, double random_ratio,
                               SamplingMode mode, Rng& rng) {
  const auto& pts = cloud.points();
  std::vector<std::size_t> chosen;
  if (pts.size() <= global_size) {
    chosen.resize(pts.size());
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  } else {
    const auto w = sampling_weights(pts, q, global_size, random_ratio, mode, rng);
    chosen = weighted_sample(w, global_size, rng);
  }
  const double diag = cloud.bbox_diagonal();
  const double inv = diag > 0.0 ? 1.0 / diag : 1.0;
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(chosen.size());
  for (std::size_t i : chosen) order.emplace_back((pts[i] - q).norm() * inv, i);
  std::sort(order.begin(), order.end());
  GlobalSet g;
  for (const auto& [d, i] : order) {
    g.indices.push_back(i);
    g.coords.push_back((pts[i] - q) * inv);
    g.distances.push_back(d);
  }
  return g;
}

inline GlobalSet sample_global(const PointCloud& cloud, const Vec3& q, const ModelConfig& cfg, std::uint64_t seed,
                               std::uint64_t stream) {
  Rng rng = make_rng(seed, stream);
  return sample_global(cloud, q, cfg.global_size, cfg.random_ratio, cfg.sampling, rng);
}

}  // namespace shsnet::model
