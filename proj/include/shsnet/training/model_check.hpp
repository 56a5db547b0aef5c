#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "shsnet/autodiff/grad_check.hpp"
#include "shsnet/geometry/shapes.hpp"
#include "shsnet/training/trainer.hpp"

namespace shsnet::training {

struct ModelCheck {
  ad::GradCheckReport report;
  std::vector<std::string> names;  // parameter tensors, in report.param order
  std::size_t scalars = 0;
};

// Finite-difference check of the total loss through the whole network, on a
// 200-point sphere. Biases are redrawn from U(-0.1, 0.1): freshly initialised
// zero biases leave ReLU inputs sitting exactly on the kink.
inline ModelCheck model_grad_check(const ModelConfig& cfg, std::uint64_t seed, std::size_t n_samples = 2,
                                   double step = 1e-5) {
  const PointCloud cloud = generate_shape(ShapeKind::sphere, 200, seed);
  const KdIndex index(cloud);
  Rng rng = make_rng(seed, 1);
  std::vector<TrainingSample> samples;
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  for (std::size_t i = 0; i < n_samples; ++i) samples.push_back(make_sample(cloud, index, pick(rng), cfg, rng));
  auto params = model::init_params(cfg, seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (auto& [name, t] : params.tensors)
    if (name.ends_with(".bias"))
      for (auto& v : t.data) v = u(rng);

  ModelCheck out;
  out.scalars = params.scalar_count();
  std::vector<ad::Tensor> tensors;
  for (const auto& [name, t] : params.tensors) {
    out.names.push_back(name);
    tensors.push_back(t);
  }
  out.report = ad::grad_check(
      [&](ad::Graph& g, const std::vector<ad::Var>& vars) {
        std::map<std::string, ad::Var> bound;
        for (std::size_t i = 0; i < out.names.size(); ++i) bound.emplace(out.names[i], vars[i]);
        return batch_loss(model::BoundParams(g, std::move(bound)), cfg, LossWeights{}, samples).total;
      },
      tensors, step);
  return out;
}

}  // namespace shsnet::training
