#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "shsnet/autodiff/graph.hpp"
#include "shsnet/autodiff/ops.hpp"
#include "shsnet/error.hpp"
#include "shsnet/geometry/kd_index.hpp"
#include "shsnet/geometry/patch.hpp"
#include "shsnet/model/config.hpp"
#include "shsnet/model/params.hpp"
#include "shsnet/model/sampling.hpp"

namespace shsnet::model {

using ad::Graph;
using ad::Var;

// Parameters placed on a graph. Trainable binding records gradients;
// otherwise they enter as constants and no backward closures are kept.
class BoundParams {
 public:
  BoundParams(Graph& g, const ModelParams& params, bool trainable) : graph_(&g) {
    for (const auto& [name, t] : params.tensors) vars_.emplace(name, trainable ? g.param(t) : g.constant(t));
  }

  // Wraps variables that already live on `g` (gradient checks build them).
  BoundParams(Graph& g, std::map<std::string, Var> vars) : graph_(&g), vars_(std::move(vars)) {}

  Graph& graph() const { return *graph_; }
  Var operator()(const std::string& name) const {
    const auto it = vars_.find(name);
    if (it == vars_.end()) throw InvalidArgument("no parameter named '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  const std::map<std::string, Var>& vars() const { return vars_; }

 private:
  Graph* graph_;
  std::map<std::string, Var> vars_;
};

// Applies the MLP `name` along the last axis of x. Hidden layers use ReLU.
inline Var mlp(const BoundParams& p, const std::string& name, Var x, bool relu_last) {
  for (std::size_t i = 0;; ++i) {
    const std::string base = name + "." + std::to_string(i);
    if (!p.contains(base + ".weight")) {
      if (i == 0) throw InvalidArgument("no layers for '" + name + "'");
      return x;
    }
    const bool last = !p.contains(name + "." + std::to_string(i + 1) + ".weight");
    const bool has_bias = p.contains(base + ".bias");
    const Var bias = has_bias ? p(base + ".bias") : Var();
    x = ad::linear(x, p(base + ".weight"), has_bias ? &bias : nullptr, !last || relu_last);
  }
}

inline double distance_beta(double distance, double gamma1, double gamma2) {
  return ad::sigmoid_value(gamma1 - gamma2 * distance);
}

// beta_i = sigmoid(g1 - g2 * d_i), w = beta / sum(beta). Distances are
// measured from the query at the origin of the local frame.
inline std::vector<double> distance_weights(std::span<const Vec3> local_coords, double gamma1, double gamma2) {
  if (local_coords.empty()) throw InvalidArgument("distance weights need at least one point");
  std::vector<double> w(local_coords.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = distance_beta(local_coords[i].norm(), gamma1, gamma2);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Differentiable form on batched distances (B, N, 1).
inline Var distance_weights(Var dists, Var gamma1, Var gamma2) {
  const Shape& s = dists.shape();
  Var beta = ad::sigmoid(ad::sub(gamma1, ad::mul(gamma2, dists)));
  Var total = ad::reshape(ad::sum_reduce(beta, 1), {s[0], 1, 1});
  return ad::div(beta, total);
}

// One local latent code extraction layer:
//   z'_i = A([z_i : B(MAX_j C(w_j z_j))]),  i < n_out
// over features z (B, N, c) ordered nearest first; dists is (B, N, 1).
inline Var local_layer(const BoundParams& p, const std::string& prefix, Var z, Var dists, std::size_t n_out,
                       bool use_weight) {
  const Shape& s = z.shape();
  const std::size_t batch = s[0];
  const std::size_t n = s[1];
  if (n_out == 0 || n_out > n) throw ShapeMismatch("local layer cannot keep " + std::to_string(n_out) + " of " + std::to_string(n) + " points");
  // MAX_j C(w_j z_j) with C a single ReLU layer; C(w z) = relu(w (z W) + b).
  Var pooled;
  if (use_weight) {
    const Var w = distance_weights(dists, p(prefix + ".gamma1"), p(prefix + ".gamma2"));
    pooled = ad::pooled_linear(z, p(prefix + ".C.0.weight"), p(prefix + ".C.0.bias"), &w);
  } else {
    pooled = ad::pooled_linear(z, p(prefix + ".C.0.weight"), p(prefix + ".C.0.bias"), nullptr);
  }
  Var global = mlp(p, prefix + ".B", pooled, true);
  Var kept = n_out == n ? z : ad::slice(z, 1, 0, n_out);
  // A acts on [z_i : g]; its rows split into a per-point part and a part
  // shared by all points of a query, so the pooled half is applied once.
  const Var wa = p(prefix + ".A.0.weight");
  const std::size_t c = kept.shape()[2];
  Var shared = ad::linear(global, ad::slice(wa, 0, c, wa.shape()[0]), nullptr, false);
  shared = ad::reshape(ad::add(shared, p(prefix + ".A.0.bias")), {batch, 1, shared.shape()[1]});
  return ad::linear(kept, ad::slice(wa, 0, 0, c), &shared, true);
}

// Per-block point counts; each block holds two layers, the first keeps its
// input size, the second shrinks to the next block's size.
inline std::vector<std::size_t> layer_outputs(const std::vector<std::size_t>& scales, std::size_t available) {
  std::vector<std::size_t> s;
  for (std::size_t v : scales) s.push_back(std::min(v, available));
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < s.size(); ++b) {
    out.push_back(s[b]);
    out.push_back(b + 1 < s.size() ? s[b + 1] : s[b]);
  }
  return out;
}

// Shared block structure of both encoders. coords (B, N, 3), dists (B, N, 1).
inline Var encode_points(const BoundParams& p, const std::string& encoder, Var coords, Var dists,
                         const std::vector<std::size_t>& scales, bool use_weight) {
  const std::size_t n = coords.shape()[1];
  const auto outs = layer_outputs(scales, n);
  Var z = mlp(p, encoder + ".init", coords, true);
  if (outs.front() < n) {
    z = ad::slice(z, 1, 0, outs.front());
    dists = ad::slice(dists, 1, 0, outs.front());
  }
  for (std::size_t i = 0; i < outs.size(); ++i) {
    const std::size_t cur = z.shape()[1];
    Var d = dists.shape()[1] == cur ? dists : ad::slice(dists, 1, 0, cur);
    z = local_layer(p, layer_prefix(encoder, i / 2, i % 2), z, d, outs[i], use_weight);
  }
  return z;
}

// Per-point patch embeddings (B, scales.last, c); row 0 belongs to the query.
inline Var patch_encoder(const BoundParams& p, const ModelConfig& cfg, Var coords, Var dists) {
  return encode_points(p, "patch", coords, dists, cfg.patch_scales(), cfg.use_distance_weight);
}

// One code per query (B, c) by max-pooling the encoded global set.
inline Var shape_encoder(const BoundParams& p, const ModelConfig& cfg, Var coords, Var dists) {
  return ad::max_reduce(encode_points(p, "shape", coords, dists, cfg.global_scales(), cfg.use_distance_weight), 1);
}

// theta [z^n_i : z^s] for every patch point; zn (B, N, c), zs (B, c).
inline Var fuse(const BoundParams& p, Var zn, Var zs) {
  const std::size_t batch = zn.shape()[0];
  const std::size_t n = zn.shape()[1];
  const std::size_t c = zs.shape()[1];
  Var rep = ad::broadcast_to(ad::reshape(zs, {batch, 1, c}), {batch, n, c});
  return mlp(p, "fuse.theta", ad::concat(zn, rep, 2), false);
}

struct HeadOutputs {
  Var raw;               // (B, 4): unnormalized direction and the head's sign term
  Var gates;             // (B, N, 1) tau
  Var attention;         // (B, N, m) per-head softmax over points
  Var neighbor_normals;  // (B, N, 3)
};

inline HeadOutputs attention_head(const BoundParams& p, const ModelConfig& cfg, Var z) {
  Graph& g = p.graph();
  const std::size_t batch = z.shape()[0];
  const std::size_t n = z.shape()[1];
  const std::size_t c = z.shape()[2];
  HeadOutputs out;
  out.neighbor_normals = mlp(p, "head.delta", z, false);
  if (!cfg.use_attention_head) {
    // Plain MLP head: pooled embedding straight into O, gates fixed to 1.
    out.gates = g.constant(Tensor::filled({batch, n, 1}, 1.0));
    out.attention = g.constant(Tensor::filled({batch, n, 1}, 1.0 / static_cast<double>(n)));
    out.raw = mlp(p, "head.O", ad::max_reduce(z, 1), false);
    return out;
  }
  out.gates = ad::sigmoid(mlp(p, "head.I", z, false));
  Var o = ad::mul(z, out.gates);
  out.attention = ad::softmax(mlp(p, "head.Q", o, false), 1);
  Var weight = ad::reshape(ad::max_reduce(out.attention, 2), {batch, 1, n});
  Var values = mlp(p, "head.V", o, false);
  Var pooled = ad::reshape(ad::matmul(weight, values), {batch, c});
  out.raw = mlp(p, "head.O", pooled, false);
  return out;
}

// Network inputs for one query.
struct QueryInput {
  Patch patch;
  GlobalSet global;
};

inline QueryInput prepare_query(const PointCloud& cloud, const KdIndex& index, std::size_t q, const ModelConfig& cfg,
                                Rng& rng) {
  QueryInput in;
  in.patch = extract_patch(cloud, index, q, std::min(cfg.patch_size, cloud.size()));
  in.global = sample_global(cloud, cloud.point(q), cfg.global_size, cfg.random_ratio, cfg.sampling, rng);
  return in;
}

inline QueryInput prepare_query(const PointCloud& cloud, const KdIndex& index, std::size_t q, const ModelConfig& cfg,
                                std::uint64_t seed) {
  Rng rng = make_rng(seed, q);
  return prepare_query(cloud, index, q, cfg, rng);
}

// Stacked inputs of B queries with equal patch and global sizes.
struct Batch {
  Tensor patch_coords;   // (B, k, 3)
  Tensor patch_dists;    // (B, k, 1)
  Tensor global_coords;  // (B, P, 3)
  Tensor global_dists;   // (B, P, 1)
  std::size_t size() const { return patch_coords.shape.empty() ? 0 : patch_coords.shape[0]; }
};

inline Batch make_batch(std::span<const QueryInput> queries) {
  if (queries.empty()) throw InvalidArgument("empty batch");
  const std::size_t b = queries.size();
  const std::size_t k = queries[0].patch.size();
  const std::size_t np = queries[0].global.coords.size();
  Batch out;
  out.patch_coords = Tensor::zeros({b, k, 3});
  out.patch_dists = Tensor::zeros({b, k, 1});
  out.global_coords = Tensor::zeros({b, np, 3});
  out.global_dists = Tensor::zeros({b, np, 1});
  for (std::size_t i = 0; i < b; ++i) {
    const auto& q = queries[i];
    if (q.patch.size() != k || q.global.coords.size() != np) throw ShapeMismatch("queries in a batch differ in size");
    for (std::size_t j = 0; j < k; ++j) {
      const Vec3& v = q.patch.local_coords[j];
      for (int d = 0; d < 3; ++d) out.patch_coords[(i * k + j) * 3 + d] = v[d];
      out.patch_dists[i * k + j] = v.norm();
    }
    for (std::size_t j = 0; j < np; ++j) {
      const Vec3& v = q.global.coords[j];
      for (int d = 0; d < 3; ++d) out.global_coords[(i * np + j) * 3 + d] = v[d];
      out.global_dists[i * np + j] = q.global.distances[j];
    }
  }
  return out;
}

struct ForwardOutputs {
  Var direction_raw;     // (B, 3) before normalization
  Var direction;         // (B, 3) unit
  Var sign_logit;        // (B, 1)
  Var gates;             // (B, N, 1)
  Var attention;         // (B, N, m)
  Var neighbor_normals;  // (B, N, 3)
  Var patch_code;        // (B, c) query row of the patch embeddings
  Var shape_code;        // (B, c)
};

inline ForwardOutputs forward(const BoundParams& p, const ModelConfig& cfg, const Batch& batch) {
  Graph& g = p.graph();
  const std::size_t b = batch.size();
  const std::size_t c = cfg.feature_dim;
  const std::size_t n_head = layer_outputs(cfg.patch_scales(), batch.patch_coords.shape[1]).back();

  Var zn;
  if (cfg.use_patch_encoding)
    zn = patch_encoder(p, cfg, g.constant(batch.patch_coords), g.constant(batch.patch_dists));
  else
    zn = g.constant(Tensor::zeros({b, n_head, c}));
  Var zs = cfg.use_shape_encoding ? shape_encoder(p, cfg, g.constant(batch.global_coords), g.constant(batch.global_dists))
                                  : g.constant(Tensor::zeros({b, c}));
  Var zq = ad::reshape(ad::slice(zn, 1, 0, 1), {b, c});

  const HeadOutputs head = attention_head(p, cfg, fuse(p, zn, zs));
  ForwardOutputs out;
  out.direction_raw = ad::slice(head.raw, 1, 0, 3);
  out.direction = ad::normalize(out.direction_raw);
  out.sign_logit = ad::add(ad::slice(head.raw, 1, 3, 4), mlp(p, "sign", ad::concat(zq, zs, 1), false));
  out.gates = head.gates;
  out.attention = head.attention;
  out.neighbor_normals = head.neighbor_normals;
  out.patch_code = zq;
  out.shape_code = zs;
  return out;
}

struct OrientedNormal {
  Vec3 direction = Vec3::UnitZ();
  double sign_logit = 0.0;
  Vec3 oriented = Vec3::UnitZ();
};

// Reads the oriented normals of a finished forward pass.
inline std::vector<OrientedNormal> read_normals(const ForwardOutputs& out, const ModelConfig& cfg) {
  const auto raw = out.direction_raw.value();
  const auto logit = out.sign_logit.value();
  std::vector<OrientedNormal> res(logit.size());
  for (std::size_t i = 0; i < res.size(); ++i) {
    const Vec3 v(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]);
    const double len = v.norm();
    if (!(len >= 1e-12)) throw DegenerateNormal();
    res[i].direction = v / len;
    res[i].sign_logit = logit[i];
    const bool flip = !cfg.direct_oriented && ad::sigmoid_value(logit[i]) < 0.5;
    res[i].oriented = flip ? Vec3(-res[i].direction) : res[i].direction;
  }
  return res;
}

// Oriented normals of the given query indices, evaluated in batches.
inline std::vector<OrientedNormal> predict_indices(const PointCloud& cloud, const KdIndex& index,
                                                   std::span<const std::size_t> queries, const ModelParams& params,
                                                   const ModelConfig& cfg, std::uint64_t seed,
                                                   std::size_t batch_size = 32) {
  std::vector<OrientedNormal> out;
  out.reserve(queries.size());
  for (std::size_t start = 0; start < queries.size(); start += batch_size) {
    const std::size_t end = std::min(queries.size(), start + batch_size);
    std::vector<QueryInput> inputs;
    for (std::size_t i = start; i < end; ++i) inputs.push_back(prepare_query(cloud, index, queries[i], cfg, seed));
    Graph g;
    const BoundParams p(g, params, false);
    const auto res = read_normals(forward(p, cfg, make_batch(inputs)), cfg);
    out.insert(out.end(), res.begin(), res.end());
  }
  return out;
}

inline OrientedNormal predict(const PointCloud& cloud, const KdIndex& index, std::size_t q, const ModelParams& params,
                              const ModelConfig& cfg, std::uint64_t seed) {
  const std::size_t one[] = {q};
  return predict_indices(cloud, index, one, params, cfg, seed, 1).front();
}

inline std::vector<OrientedNormal> predict_cloud(const PointCloud& cloud, const ModelParams& params,
                                                 const ModelConfig& cfg, std::uint64_t seed,
                                                 std::size_t batch_size = 32) {
  const KdIndex index(cloud);
  std::vector<std::size_t> all(cloud.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return predict_indices(cloud, index, all, params, cfg, seed, batch_size);
}

}  // namespace shsnet::model
