#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "shsnet/autodiff/graph.hpp"
#include "shsnet/autodiff/tensor.hpp"
#include "shsnet/error.hpp"

// Differentiable operators. Every function appends exactly one node to the
// graph owning its inputs. Broadcasting follows numpy rules (trailing axes
// aligned, size-1 axes stretched).

namespace shsnet::ad {

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// out += a * b, optionally evaluated in single precision.
template <class A, class B, class Out>
void gemm_acc(const A& a, const B& b, Out&& out, bool fast) {
  if (fast) {
    using F = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const F af = a.template cast<float>();
    const F bf = b.template cast<float>();
    F prod(af.rows(), bf.cols());
    prod.noalias() = af * bf;
    out += prod.template cast<double>();
  } else
    out.noalias() += a * b;
}

[[noreturn]] inline void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeMismatch(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) mismatch(op, a, b);
    out[i] = std::max(da, db);
    if (da == 0 || db == 0) out[i] = 0;
  }
  return out;
}

inline std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    const std::size_t oi = i + (out.size() - s.size());
    strides[oi] = s[i] == 1 ? 0 : stride;
    stride *= s[i];
  }
  return strides;
}

// True when `s` (ignoring leading 1s) equals the trailing axes of `out`.
inline bool is_trailing(const Shape& s, const Shape& out) {
  std::size_t lead = 0;
  while (lead < s.size() && s[lead] == 1) ++lead;
  const std::size_t len = s.size() - lead;
  if (len > out.size()) return false;
  return std::equal(s.begin() + static_cast<std::ptrdiff_t>(lead), s.end(),
                    out.end() - static_cast<std::ptrdiff_t>(len));
}

// If `s` equals `out` with some trailing axes collapsed to 1, returns how
// many consecutive output entries share one element of `s`; otherwise 0.
inline std::size_t inner_repeat(const Shape& s, const Shape& out) {
  if (s.size() != out.size()) return 0;
  std::size_t d = s.size();
  std::size_t inner = 1;
  while (d > 0 && s[d - 1] == 1) inner *= out[--d];
  for (std::size_t i = 0; i < d; ++i)
    if (s[i] != out[i]) return 0;
  return inner;
}

// Calls f(i, ia, ib) for every flat output index i with the matching flat
// indices into the two (broadcast) operands.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
  const std::size_t n = numel(out);
  const std::size_t na = numel(sa);
  const std::size_t nb = numel(sb);
  if (na == n && nb == n && sa.size() == sb.size()) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  if (na == n && is_trailing(sb, out)) {
    for (std::size_t i = 0, ib = 0; i < n; ++i) {
      f(i, i, ib);
      if (++ib == nb) ib = 0;
    }
    return;
  }
  if (nb == n && is_trailing(sa, out)) {
    for (std::size_t i = 0, ia = 0; i < n; ++i) {
      f(i, ia, i);
      if (++ia == na) ia = 0;
    }
    return;
  }
  if (const std::size_t r = na == n ? inner_repeat(sb, out) : 0; r > 0) {
    for (std::size_t ib = 0, i = 0; ib < nb; ++ib)
      for (std::size_t j = 0; j < r; ++j, ++i) f(i, i, ib);
    return;
  }
  if (const std::size_t r = nb == n ? inner_repeat(sa, out) : 0; r > 0) {
    for (std::size_t ia = 0, i = 0; ia < na; ++ia)
      for (std::size_t j = 0; j < r; ++j, ++i) f(i, ia, i);
    return;
  }
  const std::size_t rank = out.size();
  const auto st_a = broadcast_strides(sa, out);
  const auto st_b = broadcast_strides(sb, out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += st_a[d];
      ib += st_b[d];
      if (idx[d] < out[d]) break;
      ia -= st_a[d] * out[d];
      ib -= st_b[d] * out[d];
      idx[d] = 0;
    }
  }
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) throw ShapeMismatch(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " + to_string(s));
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

inline Shape drop_axis(Shape s, std::size_t axis) {
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(axis));
  return s;
}

inline Graph& same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw InvalidArgument("operands belong to different graphs");
  return a.graph();
}

template <class Fwd, class DA, class DB>
Var binary(Op op, const char* name, Var a, Var b, Fwd fwd, DA da, DB db) {
  Graph& g = same_graph(a, b);
  Shape out = broadcast_shape(a.shape(), b.shape(), name);
  Buffer val(numel(out));
  const auto av = a.value();
  const auto bv = b.value();
  for_each_broadcast(out, a.shape(), b.shape(),
                     [&](std::size_t i, std::size_t ia, std::size_t ib) { val[i] = fwd(av[ia], bv[ib]); });
  const std::size_t ida = a.id();
  const std::size_t idb = b.id();
  return g.emit(op, {a, b}, std::move(out), std::move(val), [ida, idb, da, db](Graph& gr, std::size_t self) {
    const auto& n = gr.node(self);
    auto ga = gr.grad_buffer(ida);
    auto gb = gr.grad_buffer(idb);
    const auto& av = gr.node(ida).value;
    const auto& bv = gr.node(idb).value;
    for_each_broadcast(n.shape, gr.node(ida).shape, gr.node(idb).shape,
                       [&](std::size_t i, std::size_t ia, std::size_t ib) {
                         const double gi = n.grad[i];
                         if (!ga.empty()) ga[ia] += gi * da(av[ia], bv[ib], n.value[i]);
                         if (!gb.empty()) gb[ib] += gi * db(av[ia], bv[ib], n.value[i]);
                       });
  });
}

// dy/dx expressed through (x, y).
template <class Fwd, class D>
Var unary(Op op, Var a, Fwd fwd, D d) {
  Graph& g = a.graph();
  const auto av = a.value();
  Buffer val(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) val[i] = fwd(av[i]);
  const std::size_t ida = a.id();
  return g.emit(op, {a}, a.shape(), std::move(val), [ida, d](Graph& gr, std::size_t self) {
    const auto& n = gr.node(self);
    auto ga = gr.grad_buffer(ida);
    const auto& av = gr.node(ida).value;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * d(av[i], n.value[i]);
  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::binary(
      Op::add, "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
  return detail::binary(
      Op::sub, "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
  return detail::binary(
      Op::mul, "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

inline Var div(Var a, Var b) {
  return detail::binary(
      Op::div, "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; }, [](double, double y, double out) { return -out / y; });
}

inline Var scale(Var a, double factor) {
  return detail::unary(
      Op::scale, a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

inline Var relu(Var a) {
  return detail::unary(
      Op::relu, a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid_value(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  return detail::unary(
      Op::sigmoid, a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

// log(1 + e^x), evaluated without overflow.
inline double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline Var softplus(Var a) {
  return detail::unary(
      Op::softplus, a, softplus_value, [](double x, double) { return sigmoid_value(x); });
}

inline Var square(Var a) {
  return detail::unary(
      Op::square, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// The derivative at 0 is taken as 0 so that norms of vanishing vectors stay finite.
inline Var sqrt(Var a) {
  return detail::unary(
      Op::sqrt, a, [](double x) { return std::sqrt(x); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

// A (..., n, k) x B (k, m) -> (..., n, m), or batched A (..., n, k) x B (..., k, m)
// with identical leading axes.
inline Var matmul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) detail::mismatch("matmul", sa, sb);
  const bool batched = sb.size() > 2;
  if (batched && (sb.size() != sa.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin())))
    detail::mismatch("matmul", sa, sb);
  const std::size_t k = sa.back();
  if (sb[sb.size() - 2] != k) detail::mismatch("matmul", sa, sb);
  const std::size_t m = sb.back();
  const std::size_t n = batched ? sa[sa.size() - 2] : numel(sa) / std::max<std::size_t>(k, 1);
  const std::size_t batches = batched ? numel(sa) / std::max<std::size_t>(n * k, 1) : 1;
  const bool fast = g.matmul_precision() == MatmulPrecision::fast;

  Shape out(sa.begin(), sa.end() - 1);
  out.push_back(m);
  Buffer val(numel(out), 0.0);
  const auto av = a.value();
  const auto bv = b.value();
  using detail::ConstMap;
  using detail::MutMap;
  const auto ni = static_cast<Eigen::Index>(n);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto mi = static_cast<Eigen::Index>(m);
  for (std::size_t t = 0; t < batches; ++t) {
    ConstMap am(av.data() + t * n * k, ni, ki);
    ConstMap bm(bv.data() + (batched ? t * k * m : 0), ki, mi);
    detail::gemm_acc(am, bm, MutMap(val.data() + t * n * m, ni, mi), fast);
  }
  const std::size_t ida = a.id();
  const std::size_t idb = b.id();
  return g.emit(Op::matmul, {a, b}, std::move(out), std::move(val),
                [ida, idb, n, k, m, batches, batched, fast](Graph& gr, std::size_t self) {
                  const auto& node = gr.node(self);
                  auto ga = gr.grad_buffer(ida);
                  auto gb = gr.grad_buffer(idb);
                  const auto& av = gr.node(ida).value;
                  const auto& bv = gr.node(idb).value;
                  const auto ni = static_cast<Eigen::Index>(n);
                  const auto ki = static_cast<Eigen::Index>(k);
                  const auto mi = static_cast<Eigen::Index>(m);
                  for (std::size_t t = 0; t < batches; ++t) {
                    ConstMap gm(node.grad.data() + t * n * m, ni, mi);
                    const std::size_t boff = batched ? t * k * m : 0;
                    if (!ga.empty())
                      detail::gemm_acc(gm, ConstMap(bv.data() + boff, ki, mi).transpose(), MutMap(ga.data() + t * n * k, ni, ki), fast);
                    if (!gb.empty())
                      detail::gemm_acc(ConstMap(av.data() + t * n * k, ni, ki).transpose(), gm, MutMap(gb.data() + boff, ki, mi), fast);
                  }
                });
}

// x (..., n, k) W (k, m) + b, optionally followed by ReLU, as one node.
// b is either (m), shared by every row, or (..., 1, m) with one row per
// leading index of x.
inline Var linear(Var x, Var w, const Var* b, bool relu_out) {
  Graph& g = detail::same_graph(x, w);
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.empty() || sw.size() != 2 || sx.back() != sw[0]) detail::mismatch("linear", sx, sw);
  const std::size_t k = sw[0];
  const std::size_t m = sw[1];
  const std::size_t rows = numel(sx) / std::max<std::size_t>(k, 1);
  std::size_t groups = 1;
  if (b) {
    const Shape& sb = b->shape();
    bool ok = !sb.empty() && sb.back() == m;
    if (ok && sb.size() > 1) {
      ok = sb.size() == sx.size() && sb[sb.size() - 2] == 1 && std::equal(sb.begin(), sb.end() - 2, sx.begin());
      groups = numel(sb) / m;
    }
    if (!ok) detail::mismatch("linear", sx, sb);
  }
  const std::size_t per_group = rows / groups;
  const bool fast = g.matmul_precision() == MatmulPrecision::fast;
  const auto ri = static_cast<Eigen::Index>(rows);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto mi = static_cast<Eigen::Index>(m);

  Shape out(sx.begin(), sx.end() - 1);
  out.push_back(m);
  Buffer val(rows * m, 0.0);
  detail::MutMap y(val.data(), ri, mi);
  detail::gemm_acc(detail::ConstMap(x.value().data(), ri, ki), detail::ConstMap(w.value().data(), ki, mi), y, fast);
  if (b) {
    const double* bv = b->value().data();
    for (std::size_t gi = 0; gi < groups; ++gi)
      y.middleRows(static_cast<Eigen::Index>(gi * per_group), static_cast<Eigen::Index>(per_group)).rowwise() +=
          Eigen::Map<const Eigen::RowVectorXd>(bv + gi * m, mi);
  }
  if (relu_out) y = y.cwiseMax(0.0);

  const std::size_t idx = x.id();
  const std::size_t idw = w.id();
  const std::size_t idb = b ? b->id() : idx;
  const bool has_b = b != nullptr;
  auto fn = [idx, idw, idb, has_b, relu_out, rows, k, m, groups, per_group, fast](Graph& gr, std::size_t self) {
    const auto& n = gr.node(self);
    const auto ri = static_cast<Eigen::Index>(rows);
    const auto ki = static_cast<Eigen::Index>(k);
    const auto mi = static_cast<Eigen::Index>(m);
    auto gx = gr.grad_buffer(idx);
    auto gw = gr.grad_buffer(idw);
    auto gb = has_b ? gr.grad_buffer(idb) : std::span<double>();
    const detail::ConstMap wm(gr.node(idw).value.data(), ki, mi);
    const detail::ConstMap xm(gr.node(idx).value.data(), ri, ki);
    // Upstream gradient with the ReLU mask applied, in the working precision.
    auto run = [&](const auto& gpre) {
      using M = std::decay_t<decltype(gpre)>;
      using S = typename M::Scalar;
      using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      if (!gx.empty()) {
        Mat prod(ri, ki);
        prod.noalias() = gpre * wm.template cast<S>().transpose();
        detail::MutMap(gx.data(), ri, ki) += prod.template cast<double>();
      }
      if (!gw.empty()) {
        Mat prod(ki, mi);
        if constexpr (std::is_same_v<S, double>)
          prod.noalias() = xm.transpose() * gpre;
        else
          prod.noalias() = Mat(xm.template cast<S>()).transpose() * gpre;
        detail::MutMap(gw.data(), ki, mi) += prod.template cast<double>();
      }
      if (!gb.empty())
        for (std::size_t gi = 0; gi < groups; ++gi)
          Eigen::Map<Eigen::RowVectorXd>(gb.data() + gi * m, mi) +=
              gpre.middleRows(static_cast<Eigen::Index>(gi * per_group), static_cast<Eigen::Index>(per_group))
                  .colwise()
                  .sum()
                  .template cast<double>();
    };
    const detail::ConstMap gm(n.grad.data(), ri, mi);
    const detail::ConstMap ym(n.value.data(), ri, mi);
    if (fast) {
      using F = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      F gpre = relu_out ? F((ym.array() > 0.0).select(gm, 0.0).template cast<float>()) : F(gm.template cast<float>());
      run(gpre);
    } else {
      detail::RowMatrix gpre = relu_out ? detail::RowMatrix((ym.array() > 0.0).select(gm, 0.0)) : detail::RowMatrix(gm);
      run(gpre);
    }
  };
  if (b) return g.emit(Op::linear, {x, w, *b}, std::move(out), std::move(val), fn);
  return g.emit(Op::linear, {x, w}, std::move(out), std::move(val), fn);
}

// max_j relu(s_j * (x_j W) + b) over the points j of each batch entry:
// x (B, N, k), W (k, m), b (m), optional row scales s (B, N, 1); result
// (B, m). Only the winning point of each channel receives gradient, so the
// backward pass touches B*m rows instead of B*N*m entries.
inline Var pooled_linear(Var x, Var w, Var b, const Var* scale_rows) {
  Graph& g = detail::same_graph(x, w);
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 3 || sw.size() != 2 || sx[2] != sw[0] || sx[1] == 0) detail::mismatch("pooled_linear", sx, sw);
  const std::size_t batch = sx[0];
  const std::size_t n = sx[1];
  const std::size_t k = sw[0];
  const std::size_t m = sw[1];
  if (b.shape() != Shape{m}) detail::mismatch("pooled_linear", sw, b.shape());
  if (scale_rows && scale_rows->shape() != Shape{batch, n, 1}) detail::mismatch("pooled_linear", sx, scale_rows->shape());
  const bool fast = g.matmul_precision() == MatmulPrecision::fast;
  const auto ni = static_cast<Eigen::Index>(n);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto mi = static_cast<Eigen::Index>(m);

  Buffer val(batch * m);
  std::vector<std::size_t> arg(batch * m);
  detail::RowMatrix pre(ni, mi);
  const auto xv = x.value();
  const auto bv = b.value();
  for (std::size_t t = 0; t < batch; ++t) {
    pre.setZero();
    detail::gemm_acc(detail::ConstMap(xv.data() + t * n * k, ni, ki), detail::ConstMap(w.value().data(), ki, mi), pre, fast);
    if (scale_rows) pre.array().colwise() *= Eigen::Map<const Eigen::ArrayXd>(scale_rows->value().data() + t * n, ni);
    pre.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), mi);
    for (std::size_t c = 0; c < m; ++c) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < n; ++j)
        if (pre(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) > pre(static_cast<Eigen::Index>(best), static_cast<Eigen::Index>(c))) best = j;
      val[t * m + c] = std::max(pre(static_cast<Eigen::Index>(best), static_cast<Eigen::Index>(c)), 0.0);
      arg[t * m + c] = best;
    }
  }

  const std::size_t idx = x.id();
  const std::size_t idw = w.id();
  const std::size_t idb = b.id();
  const std::size_t ids = scale_rows ? scale_rows->id() : idx;
  const bool has_s = scale_rows != nullptr;
  auto fn = [idx, idw, idb, ids, has_s, batch, n, k, m](Graph& gr, std::size_t self) {
    const auto& node = gr.node(self);
    auto gx = gr.grad_buffer(idx);
    auto gw = gr.grad_buffer(idw);
    auto gb = gr.grad_buffer(idb);
    auto gs = has_s ? gr.grad_buffer(ids) : std::span<double>();
    const auto& xv = gr.node(idx).value;
    const auto& wv = gr.node(idw).value;
    const double* sv = has_s ? gr.node(ids).value.data() : nullptr;
    for (std::size_t t = 0; t < batch; ++t) {
      for (std::size_t c = 0; c < m; ++c) {
        const double up = node.grad[t * m + c];
        if (node.value[t * m + c] <= 0.0 || up == 0.0) continue;
        const std::size_t row = t * n + node.argmax[t * m + c];
        const double s = sv ? sv[row] : 1.0;
        const double* xr = xv.data() + row * k;
        if (!gb.empty()) gb[c] += up;
        double dot = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          const double wic = wv[i * m + c];
          if (!gx.empty()) gx[row * k + i] += up * s * wic;
          if (!gw.empty()) gw[i * m + c] += up * s * xr[i];
          dot += xr[i] * wic;
        }
        if (!gs.empty()) gs[row] += up * dot;
      }
    }
  };
  Var out = has_s ? g.emit(Op::pooled_linear, {x, w, b, *scale_rows}, {batch, m}, std::move(val), fn)
                  : g.emit(Op::pooled_linear, {x, w, b}, {batch, m}, std::move(val), fn);
  g.node(out.id()).argmax = std::move(arg);
  return out;
}

inline Var concat(Var a, Var b, std::size_t axis) {
  Graph& g = detail::same_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || axis >= sa.size()) detail::mismatch("concat", sa, sb);
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (i != axis && sa[i] != sb[i]) detail::mismatch("concat", sa, sb);
  }
  const auto split = detail::split_axis(sa, axis, "concat");
  const std::size_t la = sa[axis] * split.inner;
  const std::size_t lb = sb[axis] * split.inner;
  Shape out = sa;
  out[axis] += sb[axis];
  Buffer val(numel(out));
  const auto av = a.value();
  const auto bv = b.value();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(av.data() + o * la, la, val.data() + o * (la + lb));
    std::copy_n(bv.data() + o * lb, lb, val.data() + o * (la + lb) + la);
  }
  const std::size_t ida = a.id();
  const std::size_t idb = b.id();
  const std::size_t outer = split.outer;
  return g.emit(Op::concat, {a, b}, std::move(out), std::move(val), [ida, idb, la, lb, outer](Graph& gr, std::size_t self) {
    const auto& n = gr.node(self);
    auto ga = gr.grad_buffer(ida);
    auto gb = gr.grad_buffer(idb);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* src = n.grad.data() + o * (la + lb);
      if (!ga.empty())
        for (std::size_t i = 0; i < la; ++i) ga[o * la + i] += src[i];
      if (!gb.empty())
        for (std::size_t i = 0; i < lb; ++i) gb[o * lb + i] += src[la + i];
    }
  });
}

// Elements [begin, end) along `axis`.
inline Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  Graph& g = a.graph();
  const auto split = detail::split_axis(a.shape(), axis, "slice");
  if (begin > end || end > split.len)
    throw ShapeMismatch("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") invalid for shape " +
                        to_string(a.shape()));
  Shape out = a.shape();
  out[axis] = end - begin;
  const std::size_t src_block = split.len * split.inner;
  const std::size_t dst_block = (end - begin) * split.inner;
  const std::size_t offset = begin * split.inner;
  Buffer val(numel(out));
  const auto av = a.value();
  for (std::size_t o = 0; o < split.outer; ++o)
    std::copy_n(av.data() + o * src_block + offset, dst_block, val.data() + o * dst_block);
  const std::size_t ida = a.id();
  const std::size_t outer = split.outer;
  return g.emit(Op::slice, {a}, std::move(out), std::move(val),
                [ida, outer, src_block, dst_block, offset](Graph& gr, std::size_t self) {
                  const auto& n = gr.node(self);
                  auto ga = gr.grad_buffer(ida);
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < dst_block; ++i) ga[o * src_block + offset + i] += n.grad[o * dst_block + i];
                });
}

inline Var reshape(Var a, Shape shape) {
  if (numel(shape) != numel(a.shape())) detail::mismatch("reshape", a.shape(), shape);
  const std::size_t ida = a.id();
  Buffer val(a.value().begin(), a.value().end());
  return a.graph().emit(Op::reshape, {a}, std::move(shape), std::move(val), [ida](Graph& gr, std::size_t self) {
    const auto& n = gr.node(self);
    auto ga = gr.grad_buffer(ida);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
  });
}

inline Var broadcast_to(Var a, Shape shape) {
  if (detail::broadcast_shape(a.shape(), shape, "broadcast_to") != shape) detail::mismatch("broadcast_to", a.shape(), shape);
  Buffer val(numel(shape));
  const auto av = a.value();
  detail::for_each_broadcast(shape, a.shape(), shape, [&](std::size_t i, std::size_t ia, std::size_t) { val[i] = av[ia]; });
  const std::size_t ida = a.id();
  return a.graph().emit(Op::broadcast_to, {a}, std::move(shape), std::move(val), [ida](Graph& gr, std::size_t self) {
    const auto& n = gr.node(self);
    auto ga = gr.grad_buffer(ida);
    detail::for_each_broadcast(n.shape, gr.node(ida).shape, n.shape,
                               [&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += n.grad[i]; });
  });
}

inline Var softmax(Var a, std::size_t axis) {
  const auto s = detail::split_axis(a.shape(), axis, "softmax");
  const auto av = a.value();
  Buffer val(av.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = av[base];
      for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, av[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const double e = std::exp(av[base + j * s.inner] - mx);
        val[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) val[base + j * s.inner] /= total;
    }
  }
  const std::size_t ida = a.id();
  return a.graph().emit(Op::softmax, {a}, a.shape(), std::move(val), [ida, s](Graph& gr, std::size_t self) {
    const auto& n = gr.node(self);
    auto ga = gr.grad_buffer(ida);
    // Jacobian-vector product: dx = y * (g - <g, y>).
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < s.len; ++j) dot += n.grad[base + j * s.inner] * n.value[base + j * s.inner];
        for (std::size_t j = 0; j < s.len; ++j) {
          const std::size_t idx = base + j * s.inner;
          ga[idx] += n.value[idx] * (n.grad[idx] - dot);
        }
      }
    }
  });
}

// Maximum along `axis` (the axis is removed). The lowest index wins ties and
// receives the whole gradient.
inline Var max_reduce(Var a, std::size_t axis) {
  const auto s = detail::split_axis(a.shape(), axis, "max_reduce");
  if (s.len == 0) throw ShapeMismatch("max_reduce over an empty axis");
  const auto av = a.value();
  Buffer val(s.outer * s.inner);
  std::vector<std::size_t> arg(val.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    const double* block = av.data() + o * s.len * s.inner;
    double* vout = val.data() + o * s.inner;
    std::size_t* aout = arg.data() + o * s.inner;
    for (std::size_t in = 0; in < s.inner; ++in) {
      vout[in] = block[in];
      aout[in] = 0;
    }
    for (std::size_t j = 1; j < s.len; ++j) {
      const double* row = block + j * s.inner;
      for (std::size_t in = 0; in < s.inner; ++in) {
        if (row[in] > vout[in]) {
          vout[in] = row[in];
          aout[in] = j;
        }
      }
    }
  }
  const std::size_t ida = a.id();
  Var out = a.graph().emit(Op::max_reduce, {a}, detail::drop_axis(a.shape(), axis), std::move(val),
                           [ida, s](Graph& gr, std::size_t self) {
                             const auto& n = gr.node(self);
                             auto ga = gr.grad_buffer(ida);
                             for (std::size_t o = 0; o < s.outer; ++o)
                               for (std::size_t in = 0; in < s.inner; ++in) {
                                 const std::size_t r = o * s.inner + in;
                                 ga[(o * s.len + n.argmax[r]) * s.inner + in] += n.grad[r];
                               }
                           });
  a.graph().node(out.id()).argmax = std::move(arg);
  return out;
}

inline Var sum_reduce(Var a, std::size_t axis) {
  const auto s = detail::split_axis(a.shape(), axis, "sum_reduce");
  const auto av = a.value();
  Buffer val(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.len; ++j)
      for (std::size_t in = 0; in < s.inner; ++in) val[o * s.inner + in] += av[(o * s.len + j) * s.inner + in];
  const std::size_t ida = a.id();
  return a.graph().emit(Op::sum_reduce, {a}, detail::drop_axis(a.shape(), axis), std::move(val),
                        [ida, s](Graph& gr, std::size_t self) {
                          const auto& n = gr.node(self);
                          auto ga = gr.grad_buffer(ida);
                          for (std::size_t o = 0; o < s.outer; ++o)
                            for (std::size_t j = 0; j < s.len; ++j)
                              for (std::size_t in = 0; in < s.inner; ++in)
                                ga[(o * s.len + j) * s.inner + in] += n.grad[o * s.inner + in];
                        });
}

inline Var mean_reduce(Var a, std::size_t axis) {
  const auto s = detail::split_axis(a.shape(), axis, "mean_reduce");
  const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(s.len, 1));
  const auto av = a.value();
  Buffer val(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.len; ++j)
      for (std::size_t in = 0; in < s.inner; ++in) val[o * s.inner + in] += av[(o * s.len + j) * s.inner + in];
  for (auto& v : val) v *= inv;
  const std::size_t ida = a.id();
  return a.graph().emit(Op::mean_reduce, {a}, detail::drop_axis(a.shape(), axis), std::move(val),
                        [ida, s, inv](Graph& gr, std::size_t self) {
                          const auto& n = gr.node(self);
                          auto ga = gr.grad_buffer(ida);
                          for (std::size_t o = 0; o < s.outer; ++o)
                            for (std::size_t j = 0; j < s.len; ++j)
                              for (std::size_t in = 0; in < s.inner; ++in)
                                ga[(o * s.len + j) * s.inner + in] += n.grad[o * s.inner + in] * inv;
                        });
}

inline Var sum_all(Var a) {
  double total = 0.0;
  for (double v : a.value()) total += v;
  const std::size_t ida = a.id();
  return a.graph().emit(Op::sum_all, {a}, Shape{}, {total}, [ida](Graph& gr, std::size_t self) {
    const double gsum = gr.node(self).grad[0];
    auto ga = gr.grad_buffer(ida);
    for (auto& x : ga) x += gsum;
  });
}

inline Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(std::max<std::size_t>(a.value().size(), 1))); }

// Cross product of 3-vectors along the last axis.
inline Var cross(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  if (a.shape() != b.shape() || a.shape().empty() || a.shape().back() != 3) detail::mismatch("cross", a.shape(), b.shape());
  const auto av = a.value();
  const auto bv = b.value();
  Buffer val(av.size());
  for (std::size_t r = 0; r < av.size(); r += 3) {
    val[r + 0] = av[r + 1] * bv[r + 2] - av[r + 2] * bv[r + 1];
    val[r + 1] = av[r + 2] * bv[r + 0] - av[r + 0] * bv[r + 2];
    val[r + 2] = av[r + 0] * bv[r + 1] - av[r + 1] * bv[r + 0];
  }
  const std::size_t ida = a.id();
  const std::size_t idb = b.id();
  return g.emit(Op::cross, {a, b}, a.shape(), std::move(val), [ida, idb](Graph& gr, std::size_t self) {
    const auto& n = gr.node(self);
    auto ga = gr.grad_buffer(ida);
    auto gb = gr.grad_buffer(idb);
    const auto& av = gr.node(ida).value;
    const auto& bv = gr.node(idb).value;
    for (std::size_t r = 0; r < n.grad.size(); r += 3) {
      const double* gv = n.grad.data() + r;
      // d(a x b) with upstream g: da = b x g, db = g x a.
      if (!ga.empty()) {
        ga[r + 0] += bv[r + 1] * gv[2] - bv[r + 2] * gv[1];
        ga[r + 1] += bv[r + 2] * gv[0] - bv[r + 0] * gv[2];
        ga[r + 2] += bv[r + 0] * gv[1] - bv[r + 1] * gv[0];
      }
      if (!gb.empty()) {
        gb[r + 0] += gv[1] * av[r + 2] - gv[2] * av[r + 1];
        gb[r + 1] += gv[2] * av[r + 0] - gv[0] * av[r + 2];
        gb[r + 2] += gv[0] * av[r + 1] - gv[1] * av[r + 0];
      }
    }
  });
}

// v / |v| along the last axis; rows with |v| <= 1e-12 map to zero.
inline Var normalize(Var a) {
  if (a.shape().empty()) throw ShapeMismatch("normalize needs at least one axis");
  const std::size_t d = a.shape().back();
  const auto av = a.value();
  Buffer val(av.size(), 0.0);
  Buffer norms(av.size() / std::max<std::size_t>(d, 1));
  for (std::size_t r = 0; r < norms.size(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += av[r * d + c] * av[r * d + c];
    norms[r] = std::sqrt(s);
    if (norms[r] > 1e-12)
      for (std::size_t c = 0; c < d; ++c) val[r * d + c] = av[r * d + c] / norms[r];
  }
  const std::size_t ida = a.id();
  return a.graph().emit(Op::normalize, {a}, a.shape(), std::move(val),
                        [ida, d, norms = std::move(norms)](Graph& gr, std::size_t self) {
                          const auto& n = gr.node(self);
                          auto ga = gr.grad_buffer(ida);
                          for (std::size_t r = 0; r < norms.size(); ++r) {
                            if (norms[r] <= 1e-12) continue;
                            double dot = 0.0;
                            for (std::size_t c = 0; c < d; ++c) dot += n.grad[r * d + c] * n.value[r * d + c];
                            for (std::size_t c = 0; c < d; ++c)
                              ga[r * d + c] += (n.grad[r * d + c] - n.value[r * d + c] * dot) / norms[r];
                          }
                        });
}

}  // namespace shsnet::ad
