#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <queue>
#include <tuple>
#include <vector>

#include "shsnet/error.hpp"
#include "shsnet/geometry/kd_index.hpp"
#include "shsnet/geometry/point_cloud.hpp"

namespace shsnet::classical {

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

}  // namespace detail

// Propagates a consistent sign over a minimum spanning tree of the symmetric
// k-NN graph, edge weight 1 - |n_i . n_j|. The highest point (max z, lowest
// index on ties) seeds the traversal with its normal forced to z >= 0.
inline std::vector<Vec3> mst_orient(const PointCloud& cloud, const std::vector<Vec3>& unoriented,
                                    std::size_t k_graph) {
  const std::size_t n = cloud.size();
  if (unoriented.size() != n) throw InvalidArgument("normals and points differ in length");
  if (k_graph < 2) throw InvalidArgument("graph neighborhood size must be >= 2");
  if (n == 0) return {};

  struct Edge {
    double weight;
    std::size_t a, b;
  };
  std::vector<Edge> edges;
  edges.reserve(n * k_graph);
  const KdIndex index(cloud);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : index.knn(cloud.point(i), k_graph + 1)) {
      if (nb.index == i) continue;
      const std::size_t a = std::min(i, nb.index);
      const std::size_t b = std::max(i, nb.index);
      edges.push_back(Edge{1.0 - std::abs(unoriented[a].dot(unoriented[b])), a, b});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    return std::tie(x.weight, x.a, x.b) < std::tie(y.weight, y.a, y.b);
  });

  detail::DisjointSets sets(n);
  std::vector<std::vector<std::size_t>> tree(n);
  std::size_t components = n;
  for (const auto& e : edges) {
    if (!sets.unite(e.a, e.b)) continue;
    tree[e.a].push_back(e.b);
    tree[e.b].push_back(e.a);
    --components;
  }
  if (components > 1) throw DisconnectedGraph(components);
  for (auto& adj : tree) std::sort(adj.begin(), adj.end());

  std::size_t seed = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (cloud.point(i).z() > cloud.point(seed).z()) seed = i;
  }

  std::vector<Vec3> oriented = unoriented;
  std::vector<bool> visited(n, false);
  if (oriented[seed].z() < 0.0) oriented[seed] = -oriented[seed];
  std::queue<std::size_t> frontier;
  frontier.push(seed);
  visited[seed] = true;
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v : tree[u]) {
      if (visited[v]) continue;
      visited[v] = true;
      if (oriented[u].dot(oriented[v]) < 0.0) oriented[v] = -oriented[v];
      frontier.push(v);
    }
  }
  return oriented;
}

}  // namespace shsnet::classical
