#pragma once

#include <cmath>
#include <map>
#include <string>

#include "shsnet/autodiff/tensor.hpp"
#include "shsnet/error.hpp"
#include "shsnet/model/params.hpp"

namespace shsnet::training {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

using Gradients = std::map<std::string, ad::Tensor>;

// One bias-corrected Adam update. Parameters without a gradient entry are
// left alone. Nothing changes if any gradient is non-finite.
inline void adam_step(model::ModelParams& params, const Gradients& grads, AdamState& state, double lr) {
  for (const auto& [name, g] : grads) {
    for (double x : g.data)
      if (!std::isfinite(x)) throw NonFiniteGradient(name);
    if (g.size() != params.at(name).size()) throw ShapeMismatch("gradient of '" + name + "' has the wrong size");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    auto& p = params.at(name).data;
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g.data[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

}  // namespace shsnet::training
