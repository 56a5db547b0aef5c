#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <queue>
#include <vector>

#include "shsnet/error.hpp"
#include "shsnet/geometry/point_cloud.hpp"

namespace shsnet {

struct Neighbor {
  std::size_t index;
  double distance;
};

// Balanced kd-tree over a point set. Queries are exact and deterministic:
// results are ordered by (distance, index).
class KdIndex {
 public:
  explicit KdIndex(const PointCloud& cloud, std::size_t leaf_size = 16) : KdIndex(cloud.points(), leaf_size) {}

  explicit KdIndex(std::vector<Vec3> points, std::size_t leaf_size = 16)
      : points_(std::move(points)), leaf_size_(leaf_size) {
    if (leaf_size_ == 0) throw InvalidArgument("kd leaf size must be positive");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) build(0, points_.size());
  }

  std::size_t size() const noexcept { return points_.size(); }
  std::size_t leaf_size() const noexcept { return leaf_size_; }
  const std::vector<Vec3>& points() const noexcept { return points_; }

  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const {
    if (k == 0) throw InvalidArgument("knn requires k >= 1");
    k = std::min(k, points_.size());
    std::vector<Neighbor> out;
    if (k == 0) return out;
    Heap heap;
    search(0, query, k, heap);
    out.resize(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
      const auto& e = heap.top();
      out[i] = Neighbor{e.index, std::sqrt(e.dist2)};
      heap.pop();
    }
    return out;
  }

 private:
  struct Entry {
    double dist2;
    std::size_t index;
    bool operator<(const Entry& o) const { return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index); }
  };
  using Heap = std::priority_queue<Entry>;  // max-heap: worst candidate on top

  struct Node {
    std::size_t begin, end;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end});
    if (end - begin <= leaf_size_) return id;

    Vec3 lo = points_[order_[begin]];
    Vec3 hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

    const std::size_t mid = begin + (end - begin) / 2;
    auto first = order_.begin() + static_cast<std::ptrdiff_t>(begin);
    std::nth_element(first, order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       return points_[a][axis] < points_[b][axis] || (points_[a][axis] == points_[b][axis] && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void offer(Heap& heap, std::size_t k, double d2, std::size_t index) const {
    Entry e{d2, index};
    if (heap.size() < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  }

  void search(std::size_t node_id, const Vec3& q, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        offer(heap, k, (points_[idx] - q).squaredNorm(), idx);
      }
      return;
    }
    // Left subtree holds coordinates <= split, right holds >= split.
    const double diff = q[node.axis] - node.split;
    const std::size_t near = diff <= 0.0 ? node.left : node.right;
    const std::size_t far = diff <= 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.top().dist2) search(far, q, k, heap);
  }

  std::vector<Vec3> points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace shsnet
