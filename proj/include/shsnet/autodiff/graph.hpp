#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "shsnet/autodiff/tensor.hpp"
#include "shsnet/error.hpp"

namespace shsnet::ad {

enum class Op {
  leaf,
  constant,
  matmul,
  add,
  sub,
  mul,
  div,
  scale,
  concat,
  slice,
  reshape,
  broadcast_to,
  relu,
  sigmoid,
  softplus,
  softmax,
  max_reduce,
  mean_reduce,
  sum_reduce,
  sum_all,
  square,
  sqrt,
  cross,
  normalize,
  linear,
  pooled_linear,
};

// `fast` runs matrix products in single precision (accumulated back into
// doubles). Meant for training throughput; gradient checks need `exact`.
enum class MatmulPrecision { exact, fast };

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Shape& shape() const;
  std::span<const double> value() const;
  double item() const;
  Tensor tensor() const;
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only tape. Node ids follow insertion order, so inputs always
// precede their consumers and a reverse sweep is a valid topological order.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  struct Node {
    Op op = Op::constant;
    std::vector<std::size_t> inputs;
    Shape shape;
    Buffer value;
    Buffer grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::size_t> argmax;  // max_reduce bookkeeping
    BackwardFn backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var param(const Tensor& t) { return push_leaf(Op::leaf, t.shape, t.data, true); }
  Var constant(const Tensor& t) { return push_leaf(Op::constant, t.shape, t.data, false); }
  Var constant(Shape shape, Buffer data) {
    if (data.size() != numel(shape)) throw ShapeMismatch("constant data does not match shape " + to_string(shape));
    return push_leaf(Op::constant, std::move(shape), std::move(data), false);
  }
  Var scalar(double v) { return constant(Shape{}, {v}); }
  // Leaf whose gradient requirement follows the tensor's flag.
  Var leaf(const Tensor& t) { return t.requires_grad ? param(t) : constant(t); }

  // Records a computed node. The backward function is kept only when some
  // input participates in differentiation.
  Var emit(Op op, std::initializer_list<Var> inputs, Shape shape, Buffer value, BackwardFn fn = {}) {
    Node node;
    node.op = op;
    node.shape = std::move(shape);
    node.value = std::move(value);
    for (const Var& v : inputs) {
      node.inputs.push_back(v.id());
      node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
    }
    if (node.requires_grad) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  void set_matmul_precision(MatmulPrecision p) noexcept { precision_ = p; }
  MatmulPrecision matmul_precision() const noexcept { return precision_; }

  const Node& node(std::size_t id) const { return nodes_[id]; }
  Node& node(std::size_t id) { return nodes_[id]; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient buffer of a node, zero-initialized on first use. Returns an
  // empty span for nodes outside the differentiable subgraph.
  std::span<double> grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return {};
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }

  void backward(Var loss) {
    Node& root = nodes_[loss.id()];
    if (root.value.size() != 1) throw NotScalar("backward needs a scalar loss, got shape " + to_string(root.shape));
    for (auto& n : nodes_) n.grad.clear();
    if (!root.requires_grad) return;
    root.grad.assign(1, 1.0);
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  // Gradient with respect to a node after backward(); zeros if none flowed.
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor::zeros(n.shape);
    return Tensor(n.shape, n.grad);
  }

 private:
  Var push_leaf(Op op, Shape shape, Buffer data, bool requires_grad) {
    Node node;
    node.op = op;
    node.shape = std::move(shape);
    node.value = std::move(data);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
  MatmulPrecision precision_ = MatmulPrecision::exact;
};

inline const Shape& Var::shape() const { return graph_->node(id_).shape; }
inline std::span<const double> Var::value() const { return graph_->node(id_).value; }
inline double Var::item() const {
  const auto& v = graph_->node(id_).value;
  if (v.size() != 1) throw NotScalar("value of shape " + to_string(shape()) + " is not a scalar");
  return v.front();
}
inline Tensor Var::tensor() const { return Tensor(shape(), graph_->node(id_).value); }
inline bool Var::requires_grad() const { return graph_->node(id_).requires_grad; }

}  // namespace shsnet::ad
