#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "shsnet/autodiff/graph.hpp"
#include "shsnet/config_file.hpp"
#include "shsnet/error.hpp"
#include "shsnet/geometry/kd_index.hpp"
#include "shsnet/model/network.hpp"
#include "shsnet/training/adam.hpp"
#include "shsnet/training/losses.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace shsnet::training {

using model::ModelConfig;
using model::ModelParams;

struct TrainConfig {
  double lr = 9e-4;
  std::vector<std::size_t> decay_epochs{25, 38, 50};
  double decay_factor = 0.2;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  std::size_t samples_per_epoch = 4096;
  LossWeights weights;
  std::uint64_t seed = 0;
  bool fast_matmul = true;  // single-precision matrix products during training

  static TrainConfig desk() { return TrainConfig{}; }
  static TrainConfig full() {
    TrainConfig t;
    t.decay_epochs = {400, 600, 800};
    t.batch_size = 145;
    t.epochs = 800;
    return t;
  }

  std::size_t steps_per_epoch() const { return (samples_per_epoch + batch_size - 1) / batch_size; }

  void validate() const {
    if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
    if (!(decay_factor > 0.0)) throw InvalidArgument("decay_factor must be positive");
    if (batch_size == 0 || samples_per_epoch == 0) throw InvalidArgument("batch_size and samples_per_epoch must be positive");
    // Zero switches a term off.
    for (double w : {weights.sin, weights.sgn, weights.mse, weights.tau, weights.oriented})
      if (!(w >= 0.0)) throw InvalidArgument("loss weights must be non-negative");
  }

  bool apply(const std::string& key, const std::string& value) {
    if (key == "lr") lr = parse_real(key, value);
    else if (key == "decay_epochs") decay_epochs = parse_count_list(key, value);
    else if (key == "decay_factor") decay_factor = parse_real(key, value);
    else if (key == "batch_size") batch_size = parse_count(key, value);
    else if (key == "epochs") epochs = parse_count(key, value);
    else if (key == "samples_per_epoch") samples_per_epoch = parse_count(key, value);
    else if (key == "lambda_sin") weights.sin = parse_real(key, value);
    else if (key == "lambda_sgn") weights.sgn = parse_real(key, value);
    else if (key == "lambda_mse") weights.mse = parse_real(key, value);
    else if (key == "lambda_tau") weights.tau = parse_real(key, value);
    else if (key == "lambda_oriented") weights.oriented = parse_real(key, value);
    else if (key == "seed") seed = parse_count(key, value);
    else if (key == "fast_matmul") fast_matmul = parse_flag(key, value);
    else return false;
    return true;
  }
};

// Model and training settings read from one key = value file. An optional
// `preset = desk|full|tiny` line picks the starting point.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

inline RunConfig run_config_from(const KeyValues& kv) {
  RunConfig rc;
  if (const auto it = kv.find("preset"); it != kv.end()) {
    if (it->second == "desk") rc.model = ModelConfig::desk();
    else if (it->second == "full") {
      rc.model = ModelConfig::full();
      rc.train = TrainConfig::full();
    } else if (it->second == "tiny") rc.model = ModelConfig::tiny();
    else throw InvalidArgument("unknown preset '" + it->second + "'");
  }
  for (const auto& [k, v] : kv) {
    if (k == "preset") continue;
    if (!rc.model.apply(k, v) && !rc.train.apply(k, v)) throw InvalidArgument("unknown config key '" + k + "'");
  }
  rc.model.validate();
  rc.train.validate();
  return rc;
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return run_config_from(load_key_values(path)); }

// Learning rate after every decay threshold <= epoch has been applied.
inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  double lr = cfg.lr;
  for (std::size_t t : cfg.decay_epochs)
    if (epoch >= t) lr *= cfg.decay_factor;
  return lr;
}

// Network inputs of one query plus its supervision.
struct TrainingSample {
  model::QueryInput input;
  Vec3 gt_normal;
  std::vector<Vec3> gt_neighbors;   // oriented GT normals of the points reaching the head
  std::vector<Vec3> head_coords;    // their canonical patch coordinates
};

inline TrainingSample make_sample(const PointCloud& cloud, const KdIndex& index, std::size_t q, const ModelConfig& cfg,
                                  Rng& rng) {
  TrainingSample s;
  s.input = model::prepare_query(cloud, index, q, cfg, rng);
  const auto& normals = cloud.normals();
  s.gt_normal = normals[q];
  const std::size_t n_head = model::layer_outputs(cfg.patch_scales(), s.input.patch.size()).back();
  for (std::size_t i = 0; i < n_head; ++i) {
    s.gt_neighbors.push_back(normals[s.input.patch.neighbor_indices[i]]);
    s.head_coords.push_back(s.input.patch.local_coords[i]);
  }
  return s;
}

struct LossTerms {
  Var total;  // lives on the graph passed to batch_loss
  double value = 0.0;
  double sin = 0.0;
  double sgn = 0.0;
  double mse = 0.0;
  double tau = 0.0;
  double oriented = 0.0;
};

// Forward pass and weighted loss of a batch on graph `p.graph()`.
inline LossTerms batch_loss(const model::BoundParams& p, const ModelConfig& cfg, const LossWeights& w,
                            std::span<const TrainingSample> samples) {
  ad::Graph& g = p.graph();
  std::vector<model::QueryInput> inputs;
  inputs.reserve(samples.size());
  for (const auto& s : samples) inputs.push_back(s.input);
  const auto out = model::forward(p, cfg, model::make_batch(inputs));

  const std::size_t b = samples.size();
  const std::size_t n = samples.front().gt_neighbors.size();
  Tensor gt({b, 3}, ad::Buffer(3 * b));
  Tensor gt_nb({b, n, 3}, ad::Buffer(3 * b * n));
  Tensor tau_t({b, n, 1}, ad::Buffer(b * n));
  Tensor labels({b, 1}, ad::Buffer(b));
  const auto dir = out.direction.value();
  for (std::size_t i = 0; i < b; ++i) {
    const auto& s = samples[i];
    for (int d = 0; d < 3; ++d) gt[3 * i + d] = s.gt_normal[d];
    for (std::size_t j = 0; j < n; ++j)
      for (int d = 0; d < 3; ++d) gt_nb[(i * n + j) * 3 + d] = s.gt_neighbors[j][d];
    const auto target = tau_targets(s.head_coords, s.gt_normal);
    std::copy(target.begin(), target.end(), tau_t.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    // Does the current unoriented prediction already face outward?
    const double dot = dir[3 * i] * s.gt_normal.x() + dir[3 * i + 1] * s.gt_normal.y() + dir[3 * i + 2] * s.gt_normal.z();
    labels[i] = dot > 0.0 ? 1.0 : 0.0;
  }
  Var gt_v = g.constant(gt);

  LossTerms terms;
  Var mse = loss_mse(out.neighbor_normals, g.constant(gt_nb), out.gates);
  Var tau = loss_tau(out.gates, g.constant(tau_t));
  terms.mse = mse.item();
  terms.tau = tau.item();
  Var total = ad::add(ad::scale(mse, w.mse), ad::scale(tau, w.tau));
  if (cfg.direct_oriented) {
    Var ori = loss_oriented(out.direction, gt_v);
    terms.oriented = ori.item();
    total = ad::add(total, ad::scale(ori, w.oriented));
  } else {
    Var sin = loss_sin(out.direction, gt_v);
    Var sgn = loss_sgn(out.sign_logit, g.constant(labels));
    terms.sin = sin.item();
    terms.sgn = sgn.item();
    total = ad::add(total, ad::add(ad::scale(sin, w.sin), ad::scale(sgn, w.sgn)));
  }
  terms.total = total;
  terms.value = total.item();
  return terms;
}

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double sin = 0.0;
  double sgn = 0.0;
  double mse = 0.0;
  double tau = 0.0;
  double oriented = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> history;
};

// One optimizer step on a batch; returns the loss terms measured before the update.
inline LossTerms train_step(ModelParams& params, AdamState& state, const ModelConfig& cfg, const LossWeights& w,
                            std::span<const TrainingSample> samples, double lr, bool fast_matmul = false) {
  ad::Graph g;
  if (fast_matmul) g.set_matmul_precision(ad::MatmulPrecision::fast);
  const model::BoundParams p(g, params, true);
  LossTerms terms = batch_loss(p, cfg, w, samples);
  g.backward(terms.total);
  Gradients grads;
  for (const auto& [name, v] : p.vars()) grads.emplace(name, g.grad(v));
  adam_step(params, grads, state, lr);
  return terms;
}

// Every step allocates and frees the same large buffers; keeping them in the
// heap avoids paying for fresh pages each time.
inline void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

using EpochCallback = std::function<void(const EpochStats&)>;

// Trains from `params` (updated in place). Queries are drawn uniformly over
// the points of all shapes; every random choice comes from `tcfg.seed`.
inline std::vector<EpochStats> train(ModelParams& params, std::span<const PointCloud> dataset, const ModelConfig& mcfg,
                                     const TrainConfig& tcfg, const EpochCallback& on_epoch = {}) {
  mcfg.validate();
  tcfg.validate();
  if (dataset.empty()) throw InvalidArgument("training needs at least one point cloud");
  std::vector<KdIndex> indices;
  std::vector<std::size_t> offsets{0};
  for (const auto& c : dataset) {
    if (!c.has_normals()) throw InvalidArgument("training clouds need ground-truth normals");
    if (c.size() < mcfg.patch_size) throw InvalidArgument("training cloud smaller than the patch size");
    indices.emplace_back(c);
    offsets.push_back(offsets.back() + c.size());
  }
  retain_freed_memory();
  Rng rng = make_rng(tcfg.seed, 0x7a11);
  std::uniform_int_distribution<std::size_t> pick(0, offsets.back() - 1);
  AdamState state;
  std::vector<EpochStats> history;
  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochStats st;
    st.epoch = epoch + 1;
    st.lr = lr_at(epoch, tcfg);
    const std::size_t steps = tcfg.steps_per_epoch();
    for (std::size_t step = 0; step < steps; ++step) {
      const std::size_t b = std::min(tcfg.batch_size, tcfg.samples_per_epoch - step * tcfg.batch_size);
      std::vector<TrainingSample> samples;
      samples.reserve(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t flat = pick(rng);
        const auto shape = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
        samples.push_back(make_sample(dataset[shape], indices[shape], flat - offsets[shape], mcfg, rng));
      }
      const auto terms = train_step(params, state, mcfg, tcfg.weights, samples, st.lr, tcfg.fast_matmul);
      const double frac = static_cast<double>(b);
      st.mean_loss += terms.value * frac;
      st.sin += terms.sin * frac;
      st.sgn += terms.sgn * frac;
      st.mse += terms.mse * frac;
      st.tau += terms.tau * frac;
      st.oriented += terms.oriented * frac;
    }
    const double n = static_cast<double>(tcfg.samples_per_epoch);
    st.mean_loss /= n;
    st.sin /= n;
    st.sgn /= n;
    st.mse /= n;
    st.tau /= n;
    st.oriented /= n;
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return history;
}

inline void write_loss_csv(const std::filesystem::path& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "epoch,lr,mean_loss,sin,sgn,mse,tau,oriented\n";
  for (const auto& s : history)
    out << s.epoch << ',' << format_real(s.lr) << ',' << format_real(s.mean_loss) << ',' << format_real(s.sin) << ','
        << format_real(s.sgn) << ',' << format_real(s.mse) << ',' << format_real(s.tau) << ','
        << format_real(s.oriented) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace shsnet::training
