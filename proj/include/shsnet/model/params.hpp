#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "shsnet/autodiff/tensor.hpp"
#include "shsnet/error.hpp"
#include "shsnet/model/config.hpp"
#include "shsnet/random.hpp"

namespace shsnet::model {

using ad::Shape;
using ad::Tensor;

// A stack of fully connected layers. Layer i owns "<name>.<i>.weight"
// (in x out) and, if `bias`, "<name>.<i>.bias" (out).
struct MlpSpec {
  std::string name;
  std::vector<std::size_t> widths;
  bool relu_last = true;  // hidden layers always use ReLU
  bool bias = true;

  std::size_t layers() const { return widths.size() - 1; }
  std::string weight(std::size_t i) const { return name + "." + std::to_string(i) + ".weight"; }
  std::string bias_name(std::size_t i) const { return name + "." + std::to_string(i) + ".bias"; }
};

inline std::string layer_prefix(const std::string& encoder, std::size_t block, std::size_t layer) {
  return encoder + ".block" + std::to_string(block) + ".layer" + std::to_string(layer);
}

// Every MLP of the network, in a fixed order used for initialization.
inline std::vector<MlpSpec> mlp_specs(const ModelConfig& cfg) {
  const std::size_t c = cfg.feature_dim;
  const std::size_t h = std::max<std::size_t>(c / 2, 1);
  std::vector<MlpSpec> specs;
  for (const char* enc : {"patch", "shape"}) {
    specs.push_back({std::string(enc) + ".init", {3, h, c}, true, true});
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      for (std::size_t l = 0; l < 2; ++l) {
        const std::string p = layer_prefix(enc, b, l);
        specs.push_back({p + ".C", {c, c}, true, true});
        specs.push_back({p + ".B", {c, c}, true, true});
        specs.push_back({p + ".A", {2 * c, c}, true, true});
      }
    }
  }
  specs.push_back({"fuse.theta", {2 * c, c}, false, false});
  specs.push_back({"head.I", {c, h, 1}, false, true});
  specs.push_back({"head.Q", {c, h, cfg.heads}, false, true});
  specs.push_back({"head.V", {c, c}, false, true});
  specs.push_back({"head.O", {c, h, 4}, false, true});
  specs.push_back({"head.delta", {c, h, 3}, false, true});
  specs.push_back({"sign", {2 * c, h, 1}, false, true});
  return specs;
}

// Names of the learnable scalars of one F-layer's distance weighting.
inline std::string gamma1_name(const std::string& encoder, std::size_t block, std::size_t layer) {
  return layer_prefix(encoder, block, layer) + ".gamma1";
}
inline std::string gamma2_name(const std::string& encoder, std::size_t block, std::size_t layer) {
  return layer_prefix(encoder, block, layer) + ".gamma2";
}

// Every learnable tensor of the network, addressable by name.
struct ModelParams {
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw InvalidArgument("no parameter named '" + name + "'");
    return it->second;
  }
  Tensor& at(const std::string& name) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw InvalidArgument("no parameter named '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors) n += t.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& [_, t] : tensors)
      for (double v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
  }
};

// He-uniform weights, zero biases, distance-weight scalars at 1.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  Rng rng = make_rng(seed, 0x5eed);
  for (const auto& spec : mlp_specs(cfg)) {
    for (std::size_t i = 0; i < spec.layers(); ++i) {
      const std::size_t in = spec.widths[i];
      const std::size_t out = spec.widths[i + 1];
      const double bound = std::sqrt(6.0 / static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      Tensor w = Tensor::zeros({in, out}, true);
      for (auto& v : w.data) v = u(rng);
      p.tensors[spec.weight(i)] = std::move(w);
      if (spec.bias) p.tensors[spec.bias_name(i)] = Tensor::zeros({out}, true);
    }
  }
  for (const char* enc : {"patch", "shape"})
    for (std::size_t b = 0; b < cfg.blocks; ++b)
      for (std::size_t l = 0; l < 2; ++l) {
        p.tensors[gamma1_name(enc, b, l)] = Tensor::scalar(1.0, true);
        p.tensors[gamma2_name(enc, b, l)] = Tensor::scalar(1.0, true);
      }
  return p;
}

}  // namespace shsnet::model
